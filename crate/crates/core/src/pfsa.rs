//! Deterministic weighted and probabilistic finite-state automata over {0,1}.
//!
//! The true process behind the synthetic data is a PFSA: white-noise strings
//! of a fixed length filtered by the presence (or absence) of a motif
//! substring, obtained by intersecting the uniform automaton with a
//! string-matching acceptor and renormalizing through dynamic programming.
//! Because all quantities of interest (partition function, entropy, mean
//! length, string probabilities) are computable exactly on the automaton,
//! every later stage of the pipeline can be checked against closed-form
//! values.
//!
//! Automata are immutable after construction and safe to share across
//! threads; sampling takes an explicit seed per caller.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use rand::Rng as _;
use thiserror::Error;

use crate::bits::BitString;
use crate::rng;

pub type StateId = usize;

/// Convergence tolerance for the iterative fixpoint solver.
const FIXPOINT_TOL: f64 = 1e-12;
/// Iteration cap for the fixpoint solver; acyclic automata converge in at
/// most `depth` iterations, far below this.
const FIXPOINT_MAX_ITERS: usize = 1_000_000;
/// Local normalization tolerance for probabilistic automata.
const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FsaError {
    #[error("duplicate transition from state {state} on label {label}")]
    NondeterministicTransition { state: StateId, label: u8 },
    #[error("negative weight {weight} on transition from state {state}")]
    NegativeWeight { state: StateId, weight: f64 },
    #[error("label {label} out of range; alphabet is {{0,1}}")]
    InvalidLabel { label: u8 },
    #[error("state {state} out of range ({n_states} states)")]
    InvalidState { state: StateId, n_states: usize },
    #[error("no final state is reachable from the initial state")]
    NoAcceptingPath,
    #[error("empty language")]
    EmptyLanguage,
    #[error("empty motif")]
    EmptyMotif,
    #[error("acyclic required")]
    AcyclicRequired,
    #[error("fixpoint iteration did not converge within {0} iterations")]
    FixpointDiverged(usize),
    #[error("outgoing weights of state {state} sum to {sum}, expected 1")]
    NotNormalized { state: StateId, sum: f64 },
    #[error("final state {state} has outgoing transitions")]
    FinalWithOutgoing { state: StateId },
    #[error("mixture probabilities sum to {0}, expected 1")]
    MixtureNotNormalized(f64),
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("disjoint supports required")]
    OverlappingSupports,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

// ---------------------------------------------------------------------------
// WeightedFsa
// ---------------------------------------------------------------------------

/// A deterministic automaton over {0,1} with nonnegative transition weights.
///
/// At most one transition leaves each state per label. The weight of a
/// string is the product of transition weights along its (unique) path, and
/// the string is accepted when the path ends in a final state.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFsa {
    /// `next[q][l] = Some((q', w))` for the transition (q, l, q', w).
    next: Vec<[Option<(StateId, f64)>; 2]>,
    initial: StateId,
    finals: BTreeSet<StateId>,
}

impl WeightedFsa {
    /// Builds an automaton from a transition list, validating determinism,
    /// weight signs and that some final state is reachable from the initial
    /// state.
    pub fn new(
        initial: StateId,
        finals: impl IntoIterator<Item = StateId>,
        transitions: &[(StateId, u8, StateId, f64)],
    ) -> Result<Self, FsaError> {
        let finals: BTreeSet<StateId> = finals.into_iter().collect();
        let n_states = transitions
            .iter()
            .flat_map(|&(q, _, q2, _)| [q, q2])
            .chain(finals.iter().copied())
            .chain([initial])
            .max()
            .unwrap_or(initial)
            + 1;
        let mut next = vec![[None, None]; n_states];
        for &(q, l, q2, w) in transitions {
            if l > 1 {
                return Err(FsaError::InvalidLabel { label: l });
            }
            if w < 0.0 || !w.is_finite() {
                return Err(FsaError::NegativeWeight { state: q, weight: w });
            }
            if next[q][l as usize].is_some() {
                return Err(FsaError::NondeterministicTransition { state: q, label: l });
            }
            next[q][l as usize] = Some((q2, w));
        }
        let fsa = WeightedFsa { next, initial, finals };
        if !fsa.reachable_from_initial().iter().any(|&q| fsa.finals.contains(&q)) {
            return Err(FsaError::NoAcceptingPath);
        }
        Ok(fsa)
    }

    pub fn n_states(&self) -> usize {
        self.next.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn finals(&self) -> &BTreeSet<StateId> {
        &self.finals
    }

    pub fn is_final(&self, q: StateId) -> bool {
        self.finals.contains(&q)
    }

    /// Transition from `q` on `label`, if any.
    pub fn step(&self, q: StateId, label: u8) -> Option<(StateId, f64)> {
        self.next[q][label as usize]
    }

    /// Transitions in (state, label) order.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, u8, StateId, f64)> + '_ {
        self.next.iter().enumerate().flat_map(|(q, row)| {
            row.iter().enumerate().filter_map(move |(l, t)| {
                t.map(|(q2, w)| (q, l as u8, q2, w))
            })
        })
    }

    fn reachable_from_initial(&self) -> Vec<StateId> {
        let mut seen = vec![false; self.n_states()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(q) = queue.pop_front() {
            order.push(q);
            for l in 0..2 {
                if let Some((q2, _)) = self.next[q][l] {
                    if !seen[q2] {
                        seen[q2] = true;
                        queue.push_back(q2);
                    }
                }
            }
        }
        order
    }

    /// States that can reach a final state (ignoring weights).
    fn coaccessible(&self) -> Vec<bool> {
        // reverse adjacency
        let mut rev: Vec<Vec<StateId>> = vec![Vec::new(); self.n_states()];
        for (q, _, q2, _) in self.transitions() {
            rev[q2].push(q);
        }
        let mut can = vec![false; self.n_states()];
        let mut queue: VecDeque<StateId> = self.finals.iter().copied().collect();
        for &q in &self.finals {
            can[q] = true;
        }
        while let Some(q) = queue.pop_front() {
            for &p in &rev[q] {
                if !can[p] {
                    can[p] = true;
                    queue.push_back(p);
                }
            }
        }
        can
    }

    /// Removes states that are unreachable from the initial state or cannot
    /// reach a final state. Returns `None` when the language is empty.
    pub fn trim(&self) -> Option<WeightedFsa> {
        let co = self.coaccessible();
        if !co[self.initial] {
            return None;
        }
        let mut remap: HashMap<StateId, StateId> = HashMap::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.initial]);
        remap.insert(self.initial, 0);
        order.push(self.initial);
        while let Some(q) = queue.pop_front() {
            for l in 0..2 {
                if let Some((q2, _)) = self.next[q][l] {
                    if co[q2] && !remap.contains_key(&q2) {
                        remap.insert(q2, order.len());
                        order.push(q2);
                        queue.push_back(q2);
                    }
                }
            }
        }
        let mut next = vec![[None, None]; order.len()];
        for (new_q, &old_q) in order.iter().enumerate() {
            for l in 0..2 {
                if let Some((q2, w)) = self.next[old_q][l] {
                    if let Some(&new_q2) = remap.get(&q2) {
                        next[new_q][l] = Some((new_q2, w));
                    }
                }
            }
        }
        let finals = order
            .iter()
            .enumerate()
            .filter(|(_, old)| self.finals.contains(old))
            .map(|(new_q, _)| new_q)
            .collect();
        Some(WeightedFsa { next, initial: 0, finals })
    }

    /// Topological order of states, or `None` if the graph is cyclic.
    fn topo_order(&self) -> Option<Vec<StateId>> {
        let n = self.n_states();
        let mut indeg = vec![0usize; n];
        for (_, _, q2, _) in self.transitions() {
            indeg[q2] += 1;
        }
        let mut queue: VecDeque<StateId> =
            (0..n).filter(|&q| indeg[q] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(q) = queue.pop_front() {
            order.push(q);
            for l in 0..2 {
                if let Some((q2, _)) = self.next[q][l] {
                    indeg[q2] -= 1;
                    if indeg[q2] == 0 {
                        queue.push_back(q2);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo_order().is_some()
    }

    /// Backward accepting mass per state: `beta(q) = [q final] + sum over
    /// transitions (q,l,q',w) of w * beta(q')`.
    fn backward_mass(&self) -> Result<Vec<f64>, FsaError> {
        let order = self.topo_order().ok_or(FsaError::AcyclicRequired)?;
        let mut beta = vec![0.0; self.n_states()];
        for &q in order.iter().rev() {
            let mut b = if self.is_final(q) { 1.0 } else { 0.0 };
            for l in 0..2 {
                if let Some((q2, w)) = self.next[q][l] {
                    b += w * beta[q2];
                }
            }
            beta[q] = b;
        }
        Ok(beta)
    }

    /// Total accepting-path weight, by one backward pass in topological
    /// order. Errors on cyclic input.
    pub fn partition_function(&self) -> Result<f64, FsaError> {
        Ok(self.backward_mass()?[self.initial])
    }

    /// Locally renormalizes into a probabilistic automaton assigning each
    /// accepted string x the probability `weight(x) / Z`.
    ///
    /// Dead states are trimmed first; the new transition probabilities are
    /// `w * beta(q') / beta(q)` with `beta` the backward accepting mass.
    pub fn normalize(&self) -> Result<Pfsa, FsaError> {
        let trimmed = self.trim().ok_or(FsaError::EmptyLanguage)?;
        let beta = trimmed.backward_mass()?;
        if beta[trimmed.initial] <= 0.0 {
            return Err(FsaError::EmptyLanguage);
        }
        let mut next = vec![[None, None]; trimmed.n_states()];
        for (q, l, q2, w) in trimmed.transitions() {
            if beta[q] > 0.0 && w * beta[q2] > 0.0 {
                next[q][l as usize] = Some((q2, w * beta[q2] / beta[q]));
            }
        }
        let fsa = WeightedFsa {
            next,
            initial: trimmed.initial,
            finals: trimmed.finals,
        };
        // zero-weight transitions may have left dead states behind
        let fsa = fsa.trim().ok_or(FsaError::EmptyLanguage)?;
        Pfsa::new(fsa)
    }

    /// Product automaton restricted to pairs reachable from the initial
    /// pair; weights multiply, a pair is final when both members are.
    /// Returns `None` when the intersection language is empty.
    pub fn intersect(&self, other: &WeightedFsa) -> Option<WeightedFsa> {
        let mut ids: HashMap<(StateId, StateId), StateId> = HashMap::new();
        let mut pairs = vec![(self.initial, other.initial)];
        ids.insert((self.initial, other.initial), 0);
        let mut next: Vec<[Option<(StateId, f64)>; 2]> = vec![[None, None]];
        let mut finals = BTreeSet::new();
        let mut head = 0;
        while head < pairs.len() {
            let (a, b) = pairs[head];
            if self.is_final(a) && other.is_final(b) {
                finals.insert(head);
            }
            for l in 0..2u8 {
                if let (Some((a2, wa)), Some((b2, wb))) =
                    (self.step(a, l), other.step(b, l))
                {
                    let id = *ids.entry((a2, b2)).or_insert_with(|| {
                        pairs.push((a2, b2));
                        next.push([None, None]);
                        pairs.len() - 1
                    });
                    next[head][l as usize] = Some((id, wa * wb));
                }
            }
            head += 1;
        }
        if finals.is_empty() {
            return None;
        }
        WeightedFsa { next, initial: 0, finals }.trim()
    }

    /// Weight of a single string: the product of transition weights along
    /// its path, or 0 when the path leaves the automaton or does not end in
    /// a final state. Accumulated in log space.
    pub fn weight(&self, x: &BitString) -> f64 {
        let mut q = self.initial;
        let mut log_w = 0.0f64;
        for &b in x.as_bits() {
            match self.step(q, b) {
                Some((q2, w)) if w > 0.0 => {
                    log_w += w.ln();
                    q = q2;
                }
                _ => return 0.0,
            }
        }
        if self.is_final(q) {
            log_w.exp()
        } else {
            0.0
        }
    }

    // -- plain-text serialization --------------------------------------

    /// Serializes as plain text: header lines `initial <id>` and
    /// `final <id>...`, then one line per transition `q l q' w`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "initial {}", self.initial).unwrap();
        write!(out, "final").unwrap();
        for q in &self.finals {
            write!(out, " {q}").unwrap();
        }
        out.push('\n');
        for (q, l, q2, w) in self.transitions() {
            writeln!(out, "{q} {l} {q2} {w}").unwrap();
        }
        out
    }

    /// Parses the plain-text format produced by [`to_text`](Self::to_text).
    pub fn from_text(text: &str) -> Result<Self, FsaError> {
        let mut initial: Option<StateId> = None;
        let mut finals: Vec<StateId> = Vec::new();
        let mut transitions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| FsaError::Parse { line: i + 1, msg: msg.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "initial" => {
                    let id = fields
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("expected `initial <id>`"))?;
                    initial = Some(id);
                }
                "final" => {
                    for f in &fields[1..] {
                        finals.push(f.parse().map_err(|_| err("bad final state id"))?);
                    }
                }
                _ => {
                    if fields.len() != 4 {
                        return Err(err("expected `q l q' w`"));
                    }
                    let q = fields[0].parse().map_err(|_| err("bad state id"))?;
                    let l: u8 = fields[1].parse().map_err(|_| err("bad label"))?;
                    let q2 = fields[2].parse().map_err(|_| err("bad state id"))?;
                    let w = fields[3].parse().map_err(|_| err("bad weight"))?;
                    transitions.push((q, l, q2, w));
                }
            }
        }
        let initial = initial.ok_or(FsaError::Parse {
            line: 0,
            msg: "missing `initial` header".to_string(),
        })?;
        WeightedFsa::new(initial, finals, &transitions)
    }
}

// ---------------------------------------------------------------------------
// Motif constructions
// ---------------------------------------------------------------------------

/// Whether the motif automaton keeps strings containing or excluding the
/// motif.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifMode {
    Contain,
    Exclude,
}

/// KMP-style transition table for a pattern: `delta[j][l]` is the length of
/// the longest prefix of the pattern that is a suffix of (the matched prefix
/// of length j) followed by `l`. State `pattern.len()` is absorbing.
pub(crate) fn match_table(pattern: &[u8]) -> Vec<[usize; 2]> {
    let m = pattern.len();
    let mut delta = vec![[0usize; 2]; m + 1];
    // failure function
    let mut fail = vec![0usize; m + 1];
    for j in 1..m {
        let mut k = fail[j];
        while k > 0 && pattern[k] != pattern[j] {
            k = fail[k];
        }
        if pattern[k] == pattern[j] {
            k += 1;
        }
        fail[j + 1] = k;
    }
    for j in 0..=m {
        for l in 0..2u8 {
            delta[j][l as usize] = if j == m {
                m // absorbing once matched
            } else if pattern[j] == l {
                j + 1
            } else {
                let mut k = fail[j];
                while k > 0 && pattern[k] != l {
                    k = fail[k];
                }
                if pattern[k] == l {
                    k + 1
                } else {
                    0
                }
            };
        }
    }
    delta
}

/// The uniform white-noise automaton over length-`n` binary strings: a
/// chain of n+1 states with both labels weighted 1/2.
pub fn white_noise(n: usize) -> WeightedFsa {
    let transitions: Vec<_> = (0..n)
        .flat_map(|i| [(i, 0u8, i + 1, 0.5), (i, 1u8, i + 1, 0.5)])
        .collect();
    WeightedFsa::new(0, [n], &transitions).expect("white-noise chain is well formed")
}

/// Substring acceptor over the full alphabet: in `Contain` mode accepts
/// exactly the strings with the motif as a substring, in `Exclude` mode
/// exactly those without it. All weights are 1.
fn substring_acceptor(motif: &BitString, mode: MotifMode) -> Result<WeightedFsa, FsaError> {
    if motif.is_empty() {
        return Err(FsaError::EmptyMotif);
    }
    let m = motif.len();
    let delta = match_table(motif.as_bits());
    let mut transitions = Vec::new();
    let finals: Vec<StateId> = match mode {
        MotifMode::Contain => {
            for j in 0..=m {
                for l in 0..2u8 {
                    transitions.push((j, l, delta[j][l as usize], 1.0));
                }
            }
            vec![m]
        }
        MotifMode::Exclude => {
            // drop the match state entirely: transitions into it reject
            for j in 0..m {
                for l in 0..2u8 {
                    let j2 = delta[j][l as usize];
                    if j2 != m {
                        transitions.push((j, l, j2, 1.0));
                    }
                }
            }
            (0..m).collect()
        }
    };
    WeightedFsa::new(0, finals, &transitions)
}

/// Intersects the length-`n` white-noise automaton with a motif acceptor.
///
/// The result assigns weight 2^-n to every length-n string that contains
/// (`Contain`) or does not contain (`Exclude`) the motif; its partition
/// function is the probability that a uniform string satisfies the
/// condition. State count is at most `(n+1) * (|motif|+1)`.
pub fn build_motif_automaton(
    motif: &BitString,
    n: usize,
    mode: MotifMode,
) -> Result<WeightedFsa, FsaError> {
    if motif.is_empty() {
        return Err(FsaError::EmptyMotif);
    }
    if mode == MotifMode::Contain && motif.len() > n {
        return Err(FsaError::EmptyLanguage);
    }
    let acceptor = substring_acceptor(motif, mode)?;
    white_noise(n)
        .intersect(&acceptor)
        .ok_or(FsaError::EmptyLanguage)
}

// ---------------------------------------------------------------------------
// Pfsa
// ---------------------------------------------------------------------------

/// A probabilistic FSA: outgoing weights of every non-final state sum to 1
/// and final states have no outgoing transitions, so transition weights are
/// next-symbol probabilities and walking the automaton samples a string.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfsa {
    fsa: WeightedFsa,
}

impl Pfsa {
    /// Validates local normalization, final-state shape and connectivity.
    pub fn new(fsa: WeightedFsa) -> Result<Self, FsaError> {
        let co = fsa.coaccessible();
        for q in fsa.reachable_from_initial() {
            if !co[q] {
                return Err(FsaError::NoAcceptingPath);
            }
            let sum: f64 = (0..2)
                .filter_map(|l| fsa.next[q][l])
                .map(|(_, w)| w)
                .sum();
            if fsa.is_final(q) {
                if sum != 0.0 {
                    return Err(FsaError::FinalWithOutgoing { state: q });
                }
            } else if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(FsaError::NotNormalized { state: q, sum });
            }
        }
        Ok(Pfsa { fsa })
    }

    pub fn as_fsa(&self) -> &WeightedFsa {
        &self.fsa
    }

    pub fn n_states(&self) -> usize {
        self.fsa.n_states()
    }

    /// Probability of a single string (the product of transition
    /// probabilities along its path; 0 when rejected).
    pub fn string_prob(&self, x: &BitString) -> f64 {
        self.fsa.weight(x)
    }

    /// Total sequence entropy in nats, `H(q_initial)` with
    /// `H(q) = sum over (q,l,q',w) of (-w ln w + w H(q'))`.
    ///
    /// Uses one backward pass in topological order when the automaton is
    /// acyclic and the iterative least-fixpoint scheme otherwise.
    pub fn entropy(&self) -> Result<f64, FsaError> {
        match self.fsa.topo_order() {
            Some(order) => Ok(self.entropy_topo(&order)),
            None => self.entropy_fixpoint(),
        }
    }

    fn entropy_topo(&self, order: &[StateId]) -> f64 {
        let mut h = vec![0.0f64; self.fsa.n_states()];
        for &q in order.iter().rev() {
            h[q] = self.local_entropy_term(q, &h);
        }
        h[self.fsa.initial]
    }

    /// Iterative solver: start from H = 0 everywhere and apply the fixpoint
    /// map until the largest per-state change drops below tolerance.
    fn entropy_fixpoint(&self) -> Result<f64, FsaError> {
        let n = self.fsa.n_states();
        let mut h = vec![0.0f64; n];
        for _ in 0..FIXPOINT_MAX_ITERS {
            let mut delta = 0.0f64;
            let prev = h.clone();
            for q in 0..n {
                h[q] = self.local_entropy_term(q, &prev);
                delta = delta.max((h[q] - prev[q]).abs());
            }
            if delta < FIXPOINT_TOL {
                return Ok(h[self.fsa.initial]);
            }
        }
        Err(FsaError::FixpointDiverged(FIXPOINT_MAX_ITERS))
    }

    fn local_entropy_term(&self, q: StateId, h: &[f64]) -> f64 {
        let mut acc = 0.0;
        for l in 0..2 {
            if let Some((q2, w)) = self.fsa.next[q][l] {
                if w > 0.0 {
                    acc += -w * w.ln() + w * h[q2];
                }
            }
        }
        acc
    }

    /// Expected accepting-path length: `L(q) = sum of w * (1 + L(q'))`.
    pub fn mean_length(&self) -> Result<f64, FsaError> {
        match self.fsa.topo_order() {
            Some(order) => {
                let mut len = vec![0.0f64; self.fsa.n_states()];
                for &q in order.iter().rev() {
                    len[q] = self.local_length_term(q, &len);
                }
                Ok(len[self.fsa.initial])
            }
            None => {
                let n = self.fsa.n_states();
                let mut len = vec![0.0f64; n];
                for _ in 0..FIXPOINT_MAX_ITERS {
                    let mut delta = 0.0f64;
                    let prev = len.clone();
                    for q in 0..n {
                        len[q] = self.local_length_term(q, &prev);
                        delta = delta.max((len[q] - prev[q]).abs());
                    }
                    if delta < FIXPOINT_TOL {
                        return Ok(len[self.fsa.initial]);
                    }
                }
                Err(FsaError::FixpointDiverged(FIXPOINT_MAX_ITERS))
            }
        }
    }

    fn local_length_term(&self, q: StateId, len: &[f64]) -> f64 {
        let mut acc = 0.0;
        for l in 0..2 {
            if let Some((q2, w)) = self.fsa.next[q][l] {
                acc += w * (1.0 + len[q2]);
            }
        }
        acc
    }

    /// Draws `count` i.i.d. strings; deterministic for a fixed seed.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<BitString> {
        let mut rng = rng::rng_from_seed(seed);
        (0..count).map(|_| self.sample_one(&mut rng)).collect()
    }

    pub(crate) fn sample_one(&self, rng: &mut rng::Rng) -> BitString {
        let mut q = self.fsa.initial;
        let mut bits = Vec::new();
        while !self.fsa.is_final(q) {
            let (label, q2) = match (self.fsa.next[q][0], self.fsa.next[q][1]) {
                (Some((q0, w0)), Some((q1, _))) => {
                    if rng.random::<f64>() < w0 {
                        (0u8, q0)
                    } else {
                        (1u8, q1)
                    }
                }
                (Some((q0, _)), None) => (0u8, q0),
                (None, Some((q1, _))) => (1u8, q1),
                (None, None) => unreachable!("non-final state without outgoing transitions"),
            };
            bits.push(label);
            q = q2;
        }
        BitString::from_bits(bits)
    }

    pub fn to_text(&self) -> String {
        self.fsa.to_text()
    }

    pub fn from_text(text: &str) -> Result<Self, FsaError> {
        Pfsa::new(WeightedFsa::from_text(text)?)
    }
}

// ---------------------------------------------------------------------------
// MixtureProcess
// ---------------------------------------------------------------------------

/// A finite mixture of PFSAs, e.g. the motif/anti-motif pair with weights
/// 0.9/0.1.
#[derive(Debug, Clone)]
pub struct MixtureProcess {
    components: Vec<(Pfsa, f64)>,
}

impl MixtureProcess {
    pub fn new(components: Vec<(Pfsa, f64)>) -> Result<Self, FsaError> {
        if components.is_empty() {
            return Err(FsaError::EmptyMixture);
        }
        let sum: f64 = components.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL || components.iter().any(|(_, p)| *p < 0.0) {
            return Err(FsaError::MixtureNotNormalized(sum));
        }
        Ok(MixtureProcess { components })
    }

    pub fn components(&self) -> &[(Pfsa, f64)] {
        &self.components
    }

    /// Mixture probability of a string: the weighted sum over components.
    pub fn string_prob(&self, x: &BitString) -> f64 {
        self.components
            .iter()
            .map(|(p, w)| w * p.string_prob(x))
            .sum()
    }

    /// Draws `count` strings, first picking a component per draw.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<BitString> {
        let mut rng = rng::rng_from_seed(seed);
        (0..count)
            .map(|_| {
                let mut u: f64 = rng.random();
                let mut idx = self.components.len() - 1;
                for (i, (_, w)) in self.components.iter().enumerate() {
                    if u < *w {
                        idx = i;
                        break;
                    }
                    u -= w;
                }
                self.components[idx].0.sample_one(&mut rng)
            })
            .collect()
    }

    /// Exact mixture entropy for disjoint component supports:
    /// `sum p_i H_i + sum -p_i ln p_i`.
    ///
    /// Disjointness is validated by intersecting component supports; any
    /// surviving accepting path with positive weight is an overlap.
    pub fn entropy(&self) -> Result<f64, FsaError> {
        for i in 0..self.components.len() {
            for j in (i + 1)..self.components.len() {
                let overlap = self.components[i]
                    .0
                    .as_fsa()
                    .intersect(self.components[j].0.as_fsa());
                if let Some(common) = overlap {
                    if common.partition_function()? > 0.0 {
                        return Err(FsaError::OverlappingSupports);
                    }
                }
            }
        }
        let mut h = 0.0;
        for (p, w) in &self.components {
            h += w * p.entropy()?;
            if *w > 0.0 {
                h += -w * w.ln();
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    /// All length-n strings accepted by the automaton, by brute force.
    fn language(a: &WeightedFsa, n: usize) -> Vec<BitString> {
        BitString::enumerate_all(n)
            .filter(|x| a.weight(x) > 0.0)
            .collect()
    }

    fn single_string_automaton(s: &str) -> WeightedFsa {
        let x = bs(s);
        let transitions: Vec<_> = x
            .as_bits()
            .iter()
            .enumerate()
            .map(|(i, &b)| (i, b, i + 1, 1.0))
            .collect();
        WeightedFsa::new(0, [x.len()], &transitions).unwrap()
    }

    // -- construction & language ---------------------------------------

    #[test]
    fn motif_11_n4_language_matches_enumeration() {
        let a = build_motif_automaton(&bs("11"), 4, MotifMode::Contain).unwrap();
        let expected: Vec<BitString> = BitString::enumerate_all(4)
            .filter(|x| x.contains(&bs("11")))
            .collect();
        assert_eq!(language(&a, 4), expected);
        assert_eq!(expected.len(), 8);
    }

    #[test]
    fn exclude_mode_is_the_complement() {
        let contain = build_motif_automaton(&bs("101"), 6, MotifMode::Contain).unwrap();
        let exclude = build_motif_automaton(&bs("101"), 6, MotifMode::Exclude).unwrap();
        let mut both = language(&contain, 6);
        both.extend(language(&exclude, 6));
        both.sort();
        assert_eq!(both.len(), 64);
        assert_eq!(both, BitString::enumerate_all(6).collect::<Vec<_>>());
    }

    #[test]
    fn single_symbol_motif_n1() {
        let a = build_motif_automaton(&bs("1"), 1, MotifMode::Contain).unwrap();
        assert_eq!(language(&a, 1), vec![bs("1")]);
        assert!((a.weight(&bs("1")) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            build_motif_automaton(&bs("111"), 2, MotifMode::Contain),
            Err(FsaError::EmptyLanguage)
        ));
        assert!(matches!(
            build_motif_automaton(&bs(""), 4, MotifMode::Contain),
            Err(FsaError::EmptyMotif)
        ));
        // a motif longer than n can never occur, so exclusion accepts all
        let a = build_motif_automaton(&bs("111"), 2, MotifMode::Exclude).unwrap();
        assert_eq!(language(&a, 2).len(), 4);
    }

    #[test]
    fn state_count_within_product_bound() {
        for (m, n) in [("11", 4), ("10110", 12), ("10001011111000", 30)] {
            let motif = bs(m);
            let a = build_motif_automaton(&motif, n, MotifMode::Contain).unwrap();
            assert!(a.n_states() <= (n + 1) * (motif.len() + 1));
        }
    }

    #[test]
    fn rejects_nondeterminism_and_bad_weights() {
        let t = [(0, 0u8, 1, 0.5), (0, 0u8, 2, 0.5)];
        assert!(matches!(
            WeightedFsa::new(0, [1], &t),
            Err(FsaError::NondeterministicTransition { .. })
        ));
        let t = [(0, 0u8, 1, -0.5)];
        assert!(matches!(
            WeightedFsa::new(0, [1], &t),
            Err(FsaError::NegativeWeight { .. })
        ));
        let t = [(0, 0u8, 1, 0.5)];
        assert!(matches!(
            WeightedFsa::new(0, [2], &t),
            Err(FsaError::NoAcceptingPath)
        ));
    }

    // -- partition function ---------------------------------------------

    #[test]
    fn partition_of_motif_11_n4_is_half() {
        let a = build_motif_automaton(&bs("11"), 4, MotifMode::Contain).unwrap();
        assert!((a.partition_function().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn partition_of_white_noise_is_one() {
        for n in [1, 5, 30] {
            assert!((white_noise(n).partition_function().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_matches_enumeration_small_n() {
        for (m, n) in [("11", 4), ("101", 7), ("0110", 10), ("1", 3)] {
            let a = build_motif_automaton(&bs(m), n, MotifMode::Contain).unwrap();
            let z = a.partition_function().unwrap();
            let brute: f64 = BitString::enumerate_all(n).map(|x| a.weight(&x)).sum();
            assert!((z - brute).abs() < 1e-12, "motif {m} n {n}: {z} vs {brute}");
        }
    }

    #[test]
    fn partition_magnitudes_by_motif_length() {
        // ~0.01 for |m|=10 and ~0.001 for |m|=14 at n=30
        let a = build_motif_automaton(&bs("1000101110"), 30, MotifMode::Contain).unwrap();
        let z = a.partition_function().unwrap();
        assert!(z > 1e-3 && z < 5e-2, "z = {z}");
        let a = build_motif_automaton(&bs("10001011111000"), 30, MotifMode::Contain).unwrap();
        let z = a.partition_function().unwrap();
        assert!(z > 5e-4 && z < 5e-3, "z = {z}");
    }

    #[test]
    fn partition_rejects_cyclic() {
        let t = [(0, 0u8, 0, 0.5), (0, 1u8, 1, 0.5)];
        let a = WeightedFsa::new(0, [1], &t).unwrap();
        assert!(matches!(a.partition_function(), Err(FsaError::AcyclicRequired)));
    }

    // -- normalize -------------------------------------------------------

    #[test]
    fn normalize_white_noise_keeps_half_transitions() {
        let p = white_noise(3).normalize().unwrap();
        for (_, _, _, w) in p.as_fsa().transitions() {
            assert!((w - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_motif_11_n4_string_prob() {
        let p = build_motif_automaton(&bs("11"), 4, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        assert!((p.string_prob(&bs("1111")) - 0.125).abs() < 1e-12);
        assert_eq!(p.string_prob(&bs("0100")), 0.0);
    }

    #[test]
    fn normalize_single_string_gives_unit_probabilities() {
        let p = single_string_automaton("10110").normalize().unwrap();
        for (_, _, _, w) in p.as_fsa().transitions() {
            assert!((w - 1.0).abs() < 1e-15);
        }
        assert!((p.string_prob(&bs("10110")) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_preserves_weight_ratios() {
        let a = build_motif_automaton(&bs("101"), 9, MotifMode::Contain).unwrap();
        let p = a.normalize().unwrap();
        let z = a.partition_function().unwrap();
        for x in BitString::enumerate_all(9) {
            let w = a.weight(&x);
            let q = p.string_prob(&x);
            assert!((q - w / z).abs() < 1e-12);
        }
    }

    #[test]
    fn pfsa_probabilities_sum_to_one_by_enumeration() {
        for (m, n) in [("11", 4), ("100", 8), ("0101", 11)] {
            let p = build_motif_automaton(&bs(m), n, MotifMode::Contain)
                .unwrap()
                .normalize()
                .unwrap();
            let total: f64 = BitString::enumerate_all(n).map(|x| p.string_prob(&x)).sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    // -- entropy ----------------------------------------------------------

    #[test]
    fn entropy_of_white_noise() {
        let p = white_noise(3).normalize().unwrap();
        assert!((p.entropy().unwrap() - 3.0 * 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_single_string_is_zero() {
        let p = single_string_automaton("0101").normalize().unwrap();
        assert!(p.entropy().unwrap().abs() < 1e-15);
    }

    #[test]
    fn entropy_matches_enumeration() {
        for (m, n) in [("101", 10), ("11", 6), ("1101", 12)] {
            let p = build_motif_automaton(&bs(m), n, MotifMode::Contain)
                .unwrap()
                .normalize()
                .unwrap();
            let brute: f64 = BitString::enumerate_all(n)
                .map(|x| p.string_prob(&x))
                .filter(|&q| q > 0.0)
                .map(|q| -q * q.ln())
                .sum();
            assert!((p.entropy().unwrap() - brute).abs() < 1e-9);
        }
    }

    #[test]
    fn fixpoint_agrees_with_topological_pass() {
        for (m, n) in [("101", 10), ("10001", 14)] {
            let p = build_motif_automaton(&bs(m), n, MotifMode::Contain)
                .unwrap()
                .normalize()
                .unwrap();
            let topo = p.entropy().unwrap();
            let iter = p.entropy_fixpoint().unwrap();
            assert!((topo - iter).abs() < 1e-9);
        }
    }

    // -- mean length -------------------------------------------------------

    #[test]
    fn mean_length_of_fixed_length_constructions() {
        let p = build_motif_automaton(&bs("10001011111000"), 30, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        assert!((p.mean_length().unwrap() - 30.0).abs() < 1e-9);
        let p = single_string_automaton("01010").normalize().unwrap();
        assert!((p.mean_length().unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mean_length_of_two_branch_automaton() {
        // paths of length 2 and 4, each with probability 1/2
        let t = [
            (0, 0u8, 1, 0.5),
            (1, 0u8, 2, 1.0),
            (0, 1u8, 3, 0.5),
            (3, 1u8, 4, 1.0),
            (4, 1u8, 5, 1.0),
            (5, 1u8, 2, 1.0),
        ];
        let p = Pfsa::new(WeightedFsa::new(0, [2], &t).unwrap()).unwrap();
        assert!((p.mean_length().unwrap() - 3.0).abs() < 1e-12);
    }

    // -- sampling -----------------------------------------------------------

    #[test]
    fn samples_from_contain_process_all_contain_motif() {
        let motif = bs("1011");
        let p = build_motif_automaton(&motif, 12, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        let xs = p.sample(500, 11);
        assert!(xs.iter().all(|x| x.contains(&motif) && x.len() == 12));
    }

    #[test]
    fn sampling_is_deterministic_and_zero_count_is_empty() {
        let p = white_noise(8).normalize().unwrap();
        assert_eq!(p.sample(100, 3), p.sample(100, 3));
        assert_ne!(p.sample(100, 3), p.sample(100, 4));
        assert!(p.sample(0, 3).is_empty());
    }

    #[test]
    fn empirical_frequencies_match_string_probs() {
        let p = build_motif_automaton(&bs("101"), 8, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        let n_samples = 100_000;
        let xs = p.sample(n_samples, 5);
        let mut counts: HashMap<BitString, usize> = HashMap::new();
        for x in xs {
            *counts.entry(x).or_default() += 1;
        }
        for x in BitString::enumerate_all(8) {
            let prob = p.string_prob(&x);
            let freq = *counts.get(&x).unwrap_or(&0) as f64 / n_samples as f64;
            let sigma = (prob * (1.0 - prob) / n_samples as f64).sqrt();
            assert!(
                (freq - prob).abs() <= 4.0 * sigma + 1e-12,
                "string {x}: freq {freq} prob {prob}"
            );
        }
    }

    // -- string_prob ----------------------------------------------------------

    #[test]
    fn string_prob_basics() {
        let p = white_noise(4).normalize().unwrap();
        assert!((p.string_prob(&bs("0101")) - 1.0 / 16.0).abs() < 1e-15);
        let p = build_motif_automaton(&bs("11"), 4, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        assert_eq!(p.string_prob(&bs("1010")), 0.0);
        assert!((p.string_prob(&bs("1111")) - 0.125).abs() < 1e-12);
    }

    // -- mixtures ---------------------------------------------------------------

    fn motif_mixture(m: &str, n: usize, w: f64) -> MixtureProcess {
        let contain = build_motif_automaton(&bs(m), n, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        let exclude = build_motif_automaton(&bs(m), n, MotifMode::Exclude)
            .unwrap()
            .normalize()
            .unwrap();
        MixtureProcess::new(vec![(contain, w), (exclude, 1.0 - w)]).unwrap()
    }

    #[test]
    fn mixture_motif_frequency_near_component_weight() {
        let motif = bs("1011");
        let mix = motif_mixture("1011", 12, 0.9);
        let n_samples = 10_000;
        let freq = mix
            .sample(n_samples, 17)
            .iter()
            .filter(|x| x.contains(&motif))
            .count() as f64
            / n_samples as f64;
        let sigma = (0.9 * 0.1 / n_samples as f64).sqrt();
        assert!((freq - 0.9).abs() <= 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn mixture_entropy_exact_small_case() {
        let mix = motif_mixture("101", 8, 0.9);
        let brute: f64 = BitString::enumerate_all(8)
            .map(|x| mix.string_prob(&x))
            .filter(|&q| q > 0.0)
            .map(|q| -q * q.ln())
            .sum();
        assert!((mix.entropy().unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn mixture_entropy_degenerate_cases() {
        let p = build_motif_automaton(&bs("101"), 8, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        let single = MixtureProcess::new(vec![(p.clone(), 1.0)]).unwrap();
        assert!((single.entropy().unwrap() - p.entropy().unwrap()).abs() < 1e-12);

        let a = single_string_automaton("0000").normalize().unwrap();
        let b = single_string_automaton("1111").normalize().unwrap();
        let half = MixtureProcess::new(vec![(a, 0.5), (b, 0.5)]).unwrap();
        assert!((half.entropy().unwrap() - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mixture_entropy_rejects_overlapping_supports() {
        let p1 = white_noise(4).normalize().unwrap();
        let p2 = build_motif_automaton(&bs("11"), 4, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        let mix = MixtureProcess::new(vec![(p1, 0.5), (p2, 0.5)]).unwrap();
        assert!(matches!(mix.entropy(), Err(FsaError::OverlappingSupports)));
    }

    #[test]
    fn mixture_validates_weights() {
        let p = white_noise(3).normalize().unwrap();
        assert!(matches!(
            MixtureProcess::new(vec![(p, 0.7)]),
            Err(FsaError::MixtureNotNormalized(_))
        ));
        assert!(matches!(
            MixtureProcess::new(vec![]),
            Err(FsaError::EmptyMixture)
        ));
    }

    // -- serialization -------------------------------------------------------

    #[test]
    fn text_round_trip_is_exact() {
        let a = build_motif_automaton(&bs("1011"), 9, MotifMode::Contain).unwrap();
        let text = a.to_text();
        let b = WeightedFsa::from_text(&text).unwrap();
        assert_eq!(a, b);
        let p = a.normalize().unwrap();
        let q = Pfsa::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = WeightedFsa::from_text("initial 0\nfinal 1\n0 2 1 0.5\n").unwrap_err();
        assert!(matches!(err, FsaError::InvalidLabel { .. }));
        let err = WeightedFsa::from_text("final 1\n0 0 1 0.5\n").unwrap_err();
        assert!(matches!(err, FsaError::Parse { .. }));
    }
}
