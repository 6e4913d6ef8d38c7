//! LSTM next-bit kernels: parameter layout, forward scoring/sampling and
//! backpropagation through time, all over flat `f64` slices.
//!
//! One recurrent layer with a start-of-sequence token and a two-way output
//! softmax per position. Strings have a fixed known length, so the sequence
//! probability is the product of exactly `seq_len` conditionals; there is no
//! end-of-sequence symbol.

use rand::Rng as _;

use crate::rng::Rng;

/// Input token ids: the two bits plus the start-of-sequence marker.
pub(crate) const TOK_SOS: usize = 2;
pub(crate) const N_TOKENS: usize = 3;

/// Offsets of the parameter blocks inside the flat parameter vector.
///
/// Gate rows are ordered (input, forget, cell, output), each `hidden` wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub embed: usize,
    pub hidden: usize,
    pub off_emb: usize,  // N_TOKENS x embed
    pub off_wx: usize,   // 4*hidden x embed, row-major
    pub off_wh: usize,   // 4*hidden x hidden, row-major
    pub off_b: usize,    // 4*hidden
    pub off_wo: usize,   // 2 x hidden
    pub off_bo: usize,   // 2
    pub total: usize,
}

impl Layout {
    pub fn new(embed: usize, hidden: usize) -> Layout {
        let off_emb = 0;
        let off_wx = off_emb + N_TOKENS * embed;
        let off_wh = off_wx + 4 * hidden * embed;
        let off_b = off_wh + 4 * hidden * hidden;
        let off_wo = off_b + 4 * hidden;
        let off_bo = off_wo + 2 * hidden;
        Layout {
            embed,
            hidden,
            off_emb,
            off_wx,
            off_wh,
            off_b,
            off_wo,
            off_bo,
            total: off_bo + 2,
        }
    }

    pub fn output_range(&self) -> std::ops::Range<usize> {
        self.off_wo..self.total
    }
}

/// `out[r] += sum_c w[r*cols + c] * x[c]`
#[inline]
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *o += acc;
    }
}

/// `out[c] += sum_r w[r*cols + c] * y[r]` (transposed product)
#[inline]
fn matvec_t_acc(w: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, yv) in y.iter().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += wv * yv;
        }
    }
}

/// `acc[r*cols + c] += y[r] * x[c]` (outer product)
#[inline]
fn outer_acc(acc: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, yv) in y.iter().enumerate() {
        let row = &mut acc[r * cols..(r + 1) * cols];
        for (a, xv) in row.iter_mut().zip(x) {
            *a += yv * xv;
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-sequence activation storage for backpropagation through time.
pub(crate) struct Workspace {
    seq_len: usize,
    hidden: usize,
    gates: Vec<f64>,   // seq_len x 4*hidden, activated (i,f,g,o)
    cells: Vec<f64>,   // seq_len x hidden
    tanh_c: Vec<f64>,  // seq_len x hidden
    hiddens: Vec<f64>, // (seq_len+1) x hidden, hiddens[0] = 0
    logits: Vec<f64>,  // seq_len x 2
    dh: Vec<f64>,
    dc: Vec<f64>,
    dz: Vec<f64>,
}

impl Workspace {
    pub fn new(seq_len: usize, hidden: usize) -> Workspace {
        Workspace {
            seq_len,
            hidden,
            gates: vec![0.0; seq_len * 4 * hidden],
            cells: vec![0.0; seq_len * hidden],
            tanh_c: vec![0.0; seq_len * hidden],
            hiddens: vec![0.0; (seq_len + 1) * hidden],
            logits: vec![0.0; seq_len * 2],
            dh: vec![0.0; hidden],
            dc: vec![0.0; hidden],
            dz: vec![0.0; 4 * hidden],
        }
    }
}

/// Minimal per-step state for scoring and sampling without gradient needs.
pub(crate) struct StepState {
    h: Vec<f64>,
    c: Vec<f64>,
    z: Vec<f64>,
}

impl StepState {
    pub fn new(hidden: usize) -> StepState {
        StepState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
            z: vec![0.0; 4 * hidden],
        }
    }
}

/// Frozen-parameter view with the per-token input contribution
/// `w_x * emb(token) + b` precomputed; this is the hot path for sampling
/// and scoring loops.
pub(crate) struct Kernel<'a> {
    layout: Layout,
    params: &'a [f64],
    input_term: Vec<f64>, // N_TOKENS x 4*hidden
}

impl<'a> Kernel<'a> {
    pub fn new(layout: Layout, params: &'a [f64]) -> Kernel<'a> {
        let (e, h) = (layout.embed, layout.hidden);
        let mut input_term = vec![0.0; N_TOKENS * 4 * h];
        for tok in 0..N_TOKENS {
            let emb = &params[layout.off_emb + tok * e..layout.off_emb + (tok + 1) * e];
            let row = &mut input_term[tok * 4 * h..(tok + 1) * 4 * h];
            row.copy_from_slice(&params[layout.off_b..layout.off_b + 4 * h]);
            matvec_acc(&params[layout.off_wx..layout.off_wx + 4 * h * e], emb, row);
        }
        Kernel { layout, params, input_term }
    }

    #[inline]
    fn w_h(&self) -> &[f64] {
        let h = self.layout.hidden;
        &self.params[self.layout.off_wh..self.layout.off_wh + 4 * h * h]
    }

    /// One recurrent step: consumes `token`, updates `(h, c)` in place and
    /// returns the two next-bit logits.
    #[inline]
    fn step(&self, token: usize, state: &mut StepState) -> [f64; 2] {
        let h = self.layout.hidden;
        let z = &mut state.z;
        z.copy_from_slice(&self.input_term[token * 4 * h..(token + 1) * 4 * h]);
        matvec_acc(self.w_h(), &state.h, z);
        for k in 0..h {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[h + k]);
            let g = z[2 * h + k].tanh();
            let o = sigmoid(z[3 * h + k]);
            let c = f * state.c[k] + i * g;
            state.c[k] = c;
            state.h[k] = o * c.tanh();
        }
        let wo = &self.params[self.layout.off_wo..self.layout.off_wo + 2 * h];
        let bo = &self.params[self.layout.off_bo..self.layout.off_bo + 2];
        let mut logits = [bo[0], bo[1]];
        for k in 0..h {
            logits[0] += wo[k] * state.h[k];
            logits[1] += wo[h + k] * state.h[k];
        }
        logits
    }

    /// Log-probability of a full bit sequence.
    pub fn score(&self, bits: &[u8], state: &mut StepState) -> f64 {
        state.h.fill(0.0);
        state.c.fill(0.0);
        let mut lp = 0.0;
        let mut token = TOK_SOS;
        for &bit in bits {
            let logits = self.step(token, state);
            lp += log_softmax_pick(logits, bit);
            token = bit as usize;
        }
        lp
    }

    /// Ancestral sample of one sequence.
    pub fn sample(&self, seq_len: usize, rng: &mut Rng, state: &mut StepState) -> Vec<u8> {
        state.h.fill(0.0);
        state.c.fill(0.0);
        let mut bits = Vec::with_capacity(seq_len);
        let mut token = TOK_SOS;
        for _ in 0..seq_len {
            let logits = self.step(token, state);
            let p1 = sigmoid(logits[1] - logits[0]);
            let bit = u8::from(rng.random::<f64>() < p1);
            bits.push(bit);
            token = bit as usize;
        }
        bits
    }

    /// Forward pass recording all activations; returns the log-probability.
    pub fn forward(&self, bits: &[u8], ws: &mut Workspace) -> f64 {
        let h = self.layout.hidden;
        debug_assert_eq!(bits.len(), ws.seq_len);
        debug_assert_eq!(h, ws.hidden);
        ws.hiddens[..h].fill(0.0);
        let mut lp = 0.0;
        for (t, &bit) in bits.iter().enumerate() {
            let token = if t == 0 { TOK_SOS } else { bits[t - 1] as usize };
            let (h_prev, h_rest) = ws.hiddens.split_at_mut((t + 1) * h);
            let h_prev = &h_prev[t * h..];
            let h_next = &mut h_rest[..h];
            let z = &mut ws.dz; // scratch for pre-activations
            z.copy_from_slice(&self.input_term[token * 4 * h..(token + 1) * 4 * h]);
            matvec_acc(self.w_h(), h_prev, z);
            let gates = &mut ws.gates[t * 4 * h..(t + 1) * 4 * h];
            let (cells_prev, cells_rest) = ws.cells.split_at_mut(t * h);
            let cells = &mut cells_rest[..h];
            let tanh_c = &mut ws.tanh_c[t * h..(t + 1) * h];
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                let c_prev = if t == 0 { 0.0 } else { cells_prev[(t - 1) * h + k] };
                let c = f * c_prev + i * g;
                gates[k] = i;
                gates[h + k] = f;
                gates[2 * h + k] = g;
                gates[3 * h + k] = o;
                cells[k] = c;
                tanh_c[k] = c.tanh();
                h_next[k] = o * tanh_c[k];
            }
            let wo = &self.params[self.layout.off_wo..self.layout.off_wo + 2 * h];
            let bo = &self.params[self.layout.off_bo..self.layout.off_bo + 2];
            let mut logits = [bo[0], bo[1]];
            for k in 0..h {
                logits[0] += wo[k] * h_next[k];
                logits[1] += wo[h + k] * h_next[k];
            }
            ws.logits[2 * t] = logits[0];
            ws.logits[2 * t + 1] = logits[1];
            lp += log_softmax_pick(logits, bit);
        }
        lp
    }

    /// Accumulates the gradient of the **negative** log-probability into
    /// `grad` (same layout as the parameters). Must be called right after
    /// [`forward`](Self::forward) on the same bits.
    pub fn backward(&self, bits: &[u8], ws: &mut Workspace, grad: &mut [f64]) {
        let h = self.layout.hidden;
        let e = self.layout.embed;
        let lay = &self.layout;
        ws.dh.fill(0.0);
        ws.dc.fill(0.0);
        for t in (0..bits.len()).rev() {
            // softmax / output layer
            let logits = [ws.logits[2 * t], ws.logits[2 * t + 1]];
            let m = logits[0].max(logits[1]);
            let e0 = (logits[0] - m).exp();
            let e1 = (logits[1] - m).exp();
            let sum = e0 + e1;
            let p = [e0 / sum, e1 / sum];
            let y = bits[t] as usize;
            let mut dlogit = [p[0], p[1]];
            dlogit[y] -= 1.0;
            let h_next = &ws.hiddens[(t + 1) * h..(t + 2) * h];
            let wo = &self.params[lay.off_wo..lay.off_wo + 2 * h];
            {
                let d_wo = &mut grad[lay.off_wo..lay.off_wo + 2 * h];
                outer_acc(d_wo, &dlogit, h_next);
            }
            grad[lay.off_bo] += dlogit[0];
            grad[lay.off_bo + 1] += dlogit[1];
            matvec_t_acc(wo, &dlogit, &mut ws.dh);

            // cell/gate backprop
            let gates = &ws.gates[t * 4 * h..(t + 1) * 4 * h];
            let tanh_c = &ws.tanh_c[t * h..(t + 1) * h];
            for k in 0..h {
                let i = gates[k];
                let f = gates[h + k];
                let g = gates[2 * h + k];
                let o = gates[3 * h + k];
                let tc = tanh_c[k];
                let dh_k = ws.dh[k];
                let dc_k = ws.dc[k] + dh_k * o * (1.0 - tc * tc);
                let c_prev = if t == 0 { 0.0 } else { ws.cells[(t - 1) * h + k] };
                let d_o = dh_k * tc;
                let d_i = dc_k * g;
                let d_f = dc_k * c_prev;
                let d_g = dc_k * i;
                ws.dz[k] = d_i * i * (1.0 - i);
                ws.dz[h + k] = d_f * f * (1.0 - f);
                ws.dz[2 * h + k] = d_g * (1.0 - g * g);
                ws.dz[3 * h + k] = d_o * o * (1.0 - o);
                ws.dc[k] = dc_k * f;
            }

            let token = if t == 0 { TOK_SOS } else { bits[t - 1] as usize };
            let emb =
                &self.params[lay.off_emb + token * e..lay.off_emb + (token + 1) * e];
            {
                let d_wx = &mut grad[lay.off_wx..lay.off_wx + 4 * h * e];
                outer_acc(d_wx, &ws.dz, emb);
            }
            {
                let d_b = &mut grad[lay.off_b..lay.off_b + 4 * h];
                for (d, dz) in d_b.iter_mut().zip(&ws.dz) {
                    *d += dz;
                }
            }
            {
                let w_x = &self.params[lay.off_wx..lay.off_wx + 4 * h * e];
                let d_emb =
                    &mut grad[lay.off_emb + token * e..lay.off_emb + (token + 1) * e];
                matvec_t_acc(w_x, &ws.dz, d_emb);
            }
            let h_prev = &ws.hiddens[t * h..(t + 1) * h];
            {
                let d_wh = &mut grad[lay.off_wh..lay.off_wh + 4 * h * h];
                outer_acc(d_wh, &ws.dz, h_prev);
            }
            ws.dh.fill(0.0);
            matvec_t_acc(self.w_h(), &ws.dz, &mut ws.dh);
        }
    }
}

/// `logits[bit] - logsumexp(logits)`, numerically stable.
#[inline]
fn log_softmax_pick(logits: [f64; 2], bit: u8) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    logits[bit as usize] - lse
}
