//! The seven-feature indicator family and its on/off mask.
//!
//! For a motif `m` the features are, in fixed order:
//!
//! | # | name   | value 0 iff                                   |
//! |---|--------|-----------------------------------------------|
//! | 0 | m      | the motif occurs in x                         |
//! | 1 | m+0    | the motif followed by `0` occurs in x         |
//! | 2 | m/2    | the first half of the motif occurs in x       |
//! | 3 | d0     | x begins with `0`                             |
//! | 4 | d1     | a fixed random string of length `|m|` occurs  |
//! | 5 | d2     | ... of length `|m|+2` occurs                  |
//! | 6 | d3     | ... of length `|m|-2` occurs                  |
//!
//! The first three correlate with the motif process; d0..d3 are
//! uninformative patterns whose weights moment matching should drive to
//! zero. All features take values in {0,1}, which the rejection-sampling
//! bound in the training code relies on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::pfsa::match_table;
use crate::rng;

pub const FEATURE_COUNT: usize = 7;

/// ASCII-safe feature names, in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["m", "m_plus0", "m_half", "d0", "d1", "d2", "d3"];

const DISTRACTOR_DRAW_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature mask must be {FEATURE_COUNT} characters of 0/1, got {0:?}")]
    BadMask(String),
    #[error("motif must be non-empty")]
    EmptyMotif,
    #[error("motif of length {0} is too short for the length-|m|-2 pattern feature (need >= 3)")]
    MotifTooShort(usize),
    #[error("could not draw a pattern of length {len} independent of the motif after {DISTRACTOR_DRAW_CAP} attempts")]
    PatternDraw { len: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("lambda/feature dimension mismatch: {lambda} vs {features}")]
    DimensionMismatch { lambda: usize, features: usize },
}

// ---------------------------------------------------------------------------
// Mask
// ---------------------------------------------------------------------------

/// Which of the 7 features are active, e.g. `1001111` for motif plus the
/// four uninformative patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMask([bool; FEATURE_COUNT]);

impl FeatureMask {
    pub fn new(bits: [bool; FEATURE_COUNT]) -> FeatureMask {
        FeatureMask(bits)
    }

    pub fn all() -> FeatureMask {
        FeatureMask([true; FEATURE_COUNT])
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.0[idx]
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..FEATURE_COUNT).filter(move |&i| self.0[i])
    }

    /// Names of the active features, in vector order.
    pub fn active_names(&self) -> Vec<&'static str> {
        self.active_indices().map(|i| FEATURE_NAMES[i]).collect()
    }
}

impl FromStr for FeatureMask {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<FeatureMask, FeatureError> {
        if s.len() != FEATURE_COUNT {
            return Err(FeatureError::BadMask(s.to_string()));
        }
        let mut bits = [false; FEATURE_COUNT];
        for (i, c) in s.chars().enumerate() {
            bits[i] = match c {
                '0' => false,
                '1' => true,
                _ => return Err(FeatureError::BadMask(s.to_string())),
            };
        }
        Ok(FeatureMask(bits))
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for FeatureMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Pattern matcher
// ---------------------------------------------------------------------------

/// Precompiled substring automaton (failure-function based) for one pattern.
#[derive(Debug, Clone)]
struct PatternMatcher {
    table: Vec<[usize; 2]>,
    m: usize,
}

impl PatternMatcher {
    fn new(pattern: &BitString) -> PatternMatcher {
        PatternMatcher {
            table: match_table(pattern.as_bits()),
            m: pattern.len(),
        }
    }

    fn occurs_in(&self, hay: &[u8]) -> bool {
        let mut state = 0usize;
        for &b in hay {
            state = self.table[state][b as usize];
            if state == self.m {
                return true;
            }
        }
        false
    }
}

// ---------------------------------------------------------------------------
// FeatureVector
// ---------------------------------------------------------------------------

/// Values of the active features for one string, in feature order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

// ---------------------------------------------------------------------------
// FeatureSpec
// ---------------------------------------------------------------------------

/// The materialized feature family for one motif: derived patterns, the
/// three fixed random patterns, and the active-feature mask.
///
/// Immutable once built; `phi` is pure and reentrant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "FeatureSpecData", into = "FeatureSpecData")]
pub struct FeatureSpec {
    motif: BitString,
    super_motif: BitString,
    sub_motif: BitString,
    distractors: [BitString; 3],
    mask: FeatureMask,
    matchers: Vec<PatternMatcher>, // for features 0,1,2,4,5,6
}

/// Serialized form: everything needed to rebuild the matchers.
#[derive(Serialize, Deserialize)]
struct FeatureSpecData {
    motif: BitString,
    distractors: [BitString; 3],
    mask: FeatureMask,
}

impl From<FeatureSpec> for FeatureSpecData {
    fn from(spec: FeatureSpec) -> FeatureSpecData {
        FeatureSpecData {
            motif: spec.motif,
            distractors: spec.distractors,
            mask: spec.mask,
        }
    }
}

impl TryFrom<FeatureSpecData> for FeatureSpec {
    type Error = FeatureError;

    fn try_from(data: FeatureSpecData) -> Result<FeatureSpec, FeatureError> {
        FeatureSpec::with_distractors(&data.motif, data.mask, data.distractors)
    }
}

impl FeatureSpec {
    /// Builds the family for `motif`, drawing the three fixed random
    /// patterns from `seed` (lengths `|m|`, `|m|+2`, `|m|-2`). A pattern is
    /// redrawn while it equals, contains or is contained in the motif, so
    /// the uninformative features stay genuinely uninformative.
    pub fn new(motif: &BitString, mask: FeatureMask, seed: u64) -> Result<FeatureSpec, FeatureError> {
        if motif.is_empty() {
            return Err(FeatureError::EmptyMotif);
        }
        if motif.len() < 3 {
            return Err(FeatureError::MotifTooShort(motif.len()));
        }
        let mut r = rng::rng_from_seed(rng::child_seed(seed, "feature-patterns"));
        let lens = [motif.len(), motif.len() + 2, motif.len() - 2];
        let mut distractors: Vec<BitString> = Vec::with_capacity(3);
        for len in lens {
            distractors.push(draw_pattern(len, motif, &mut r)?);
        }
        let distractors: [BitString; 3] = distractors.try_into().expect("three patterns");
        Self::with_distractors(motif, mask, distractors)
    }

    fn with_distractors(
        motif: &BitString,
        mask: FeatureMask,
        distractors: [BitString; 3],
    ) -> Result<FeatureSpec, FeatureError> {
        if motif.is_empty() {
            return Err(FeatureError::EmptyMotif);
        }
        let half = motif.len().div_ceil(2);
        let super_motif: BitString = {
            let mut bits = motif.as_bits().to_vec();
            bits.push(0);
            BitString::from_bits(bits)
        };
        let sub_motif = motif.prefix(half);
        let matchers = vec![
            PatternMatcher::new(motif),
            PatternMatcher::new(&super_motif),
            PatternMatcher::new(&sub_motif),
            PatternMatcher::new(&distractors[0]),
            PatternMatcher::new(&distractors[1]),
            PatternMatcher::new(&distractors[2]),
        ];
        Ok(FeatureSpec {
            motif: motif.clone(),
            super_motif,
            sub_motif,
            distractors,
            mask,
            matchers,
        })
    }

    pub fn motif(&self) -> &BitString {
        &self.motif
    }

    pub fn super_motif(&self) -> &BitString {
        &self.super_motif
    }

    pub fn sub_motif(&self) -> &BitString {
        &self.sub_motif
    }

    pub fn distractors(&self) -> &[BitString; 3] {
        &self.distractors
    }

    pub fn mask(&self) -> FeatureMask {
        self.mask
    }

    /// Dimension of the vectors `phi` produces.
    pub fn active_count(&self) -> usize {
        self.mask.active_count()
    }

    /// Raw value of feature `idx` (unmasked) on a bit slice.
    fn raw_feature(&self, idx: usize, bits: &[u8]) -> f64 {
        let present = match idx {
            0 => self.matchers[0].occurs_in(bits),
            1 => self.matchers[1].occurs_in(bits),
            2 => self.matchers[2].occurs_in(bits),
            3 => bits.first() == Some(&0),
            4 => self.matchers[3].occurs_in(bits),
            5 => self.matchers[4].occurs_in(bits),
            6 => self.matchers[5].occurs_in(bits),
            _ => unreachable!(),
        };
        if present {
            0.0
        } else {
            1.0
        }
    }

    /// Feature vector of `x`: masked-out features are absent, not
    /// zero-filled. Values follow the absence-indicator convention (0 when
    /// the pattern/condition holds).
    pub fn phi(&self, x: &BitString) -> FeatureVector {
        self.phi_bits(x.as_bits())
    }

    pub fn phi_bits(&self, bits: &[u8]) -> FeatureVector {
        FeatureVector(
            self.mask
                .active_indices()
                .map(|i| self.raw_feature(i, bits))
                .collect(),
        )
    }

    /// `<lambda, phi(x)>` without materializing the vector; the hot path of
    /// rejection sampling.
    pub fn weighted_phi(&self, lambda: &[f64], bits: &[u8]) -> Result<f64, FeatureError> {
        if lambda.len() != self.active_count() {
            return Err(FeatureError::DimensionMismatch {
                lambda: lambda.len(),
                features: self.active_count(),
            });
        }
        Ok(self
            .mask
            .active_indices()
            .zip(lambda)
            .map(|(i, l)| l * self.raw_feature(i, bits))
            .sum())
    }

    /// Componentwise mean of `phi` over a dataset.
    pub fn empirical_moments(&self, data: &[BitString]) -> Result<Vec<f64>, FeatureError> {
        if data.is_empty() {
            return Err(FeatureError::EmptyDataset);
        }
        let mut acc = vec![0.0; self.active_count()];
        for x in data {
            for (a, v) in acc.iter_mut().zip(self.phi(x).values()) {
                *a += v;
            }
        }
        let scale = 1.0 / data.len() as f64;
        for a in &mut acc {
            *a *= scale;
        }
        Ok(acc)
    }
}

fn draw_pattern(
    len: usize,
    motif: &BitString,
    r: &mut rng::Rng,
) -> Result<BitString, FeatureError> {
    use rand::Rng as _;
    for _ in 0..DISTRACTOR_DRAW_CAP {
        let bits: Vec<u8> = (0..len).map(|_| u8::from(r.random::<bool>())).collect();
        let cand = BitString::from_bits(bits);
        let related = cand == *motif || motif.contains(&cand) || cand.contains(motif);
        if !related {
            return Ok(cand);
        }
    }
    Err(FeatureError::PatternDraw { len })
}
