//! Global autoregressive models (GAMs) over fixed-length binary sequences.
//!
//! A GAM multiplies an autoregressive base model `r(x)` with a log-linear
//! factor, giving an unnormalized potential
//!
//! ```text
//! P_lambda(x) = r(x) * exp(<lambda, phi(x)>)
//! ```
//!
//! where `phi(x)` is a vector of binary indicator features. With `r` frozen
//! this is an exponential family with base measure `r`, so the weights
//! `lambda` can be fitted by moment matching. The crate implements the whole
//! pipeline on exactly solvable synthetic data:
//!
//! - [`pfsa`]: deterministic probabilistic finite-state automata used as the
//!   true process (white-noise strings filtered by motif presence/absence),
//!   with exact dynamic programming for entropy, partition functions and
//!   mean length.
//! - [`features`]: the seven-feature indicator family (motif, super-motif,
//!   sub-motif, and four uninformative patterns) with an on/off mask.
//! - [`armodel`]: a from-scratch LSTM next-bit model with analytic
//!   backpropagation, Adam training, exact scoring and ancestral sampling.
//! - [`gam`]: the potential itself plus moment-matching training of `lambda`
//!   using rejection sampling or self-normalized importance sampling, with
//!   full-enumeration oracles at small sequence lengths.
//! - [`distill`]: rejection-sampling distillation of the normalized GAM into
//!   a fresh autoregressive model, in one shot or cyclically with proposal
//!   updates.
//!
//! Everything is deterministic given seeds; see [`rng`] for how seeds are
//! derived per stage.

pub mod armodel;
pub mod bits;
pub mod distill;
pub mod features;
pub mod gam;
pub mod pfsa;
pub mod rng;

pub use bits::BitString;
