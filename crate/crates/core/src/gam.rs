//! The global autoregressive model: potential, moment estimators, and
//! weight training by moment matching.
//!
//! With the base model `r` frozen, `P_lambda(x) = r(x) * exp(<lambda,
//! phi(x)>)` is an exponential family with base measure `r`, so the
//! log-likelihood of data is convex in `lambda` and its gradient is the
//! difference between empirical and model feature moments:
//!
//! ```text
//! grad log p_lambda(x) = phi(x) - E_{x ~ p_lambda} phi(x)
//! ```
//!
//! The model moments are estimated either by rejection sampling (draw from
//! `r`, accept with probability `exp(<lambda, phi(x)>) / beta`; since
//! features are in {0,1} the ratio bound is `beta = exp(sum_i
//! max(lambda_i, 0))`) or by self-normalized importance sampling over a
//! buffer of cached samples of `r` (the `r` factors cancel from the
//! importance weights, leaving `w(x) = exp(<lambda, phi(x)>)`).
//!
//! At small sequence lengths every quantity can also be computed exactly by
//! enumerating all strings; those oracles live here too and back the tests.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::armodel::{ArError, ArModel, StepState};
use crate::bits::BitString;
use crate::features::{FeatureError, FeatureSpec};
use crate::rng;

/// Largest sequence length the enumeration oracles accept (2^n strings).
pub const MAX_ENUM_LEN: usize = 12;

/// Parallel chunk size for rejection-sampling draws.
const RS_CHUNK: usize = 8_192;

#[derive(Debug, Error)]
pub enum GamError {
    #[error("acceptance too low: {accepted} accepted after {draws} draws (rate {rate:.3e})")]
    AcceptanceTooLow { accepted: usize, draws: u64, rate: f64 },
    #[error("degenerate weights: every importance weight underflowed to zero")]
    DegenerateWeights,
    #[error("snis buffer is empty")]
    EmptyBuffer,
    #[error("lambda became non-finite at epoch {epoch}")]
    NonFiniteLambda { epoch: usize },
    #[error("sequence length {0} too large for enumeration (max {MAX_ENUM_LEN})")]
    EnumerationTooLarge(usize),
    #[error("rejection bound violated: the proposal does not dominate the potential (log ratio {log_ratio:.3})")]
    BoundViolated { log_ratio: f64 },
    #[error("lambda dimension {lambda} does not match active feature count {features}")]
    DimensionMismatch { lambda: usize, features: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ar(#[from] ArError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Which moment estimator drives the weight updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Rs,
    Snis,
}

impl std::str::FromStr for Regime {
    type Err = GamError;

    fn from_str(s: &str) -> Result<Regime, GamError> {
        match s {
            "rs" => Ok(Regime::Rs),
            "snis" => Ok(Regime::Snis),
            other => Err(GamError::InvalidConfig(format!(
                "unknown regime {other:?}, expected rs or snis"
            ))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Rs => "rs",
            Regime::Snis => "snis",
        })
    }
}

// ---------------------------------------------------------------------------
// Gam
// ---------------------------------------------------------------------------

/// The pair (frozen base model, feature weights) defining the potential
/// `P_lambda(x) = r(x) * exp(<lambda, phi(x)>)`.
#[derive(Debug, Clone)]
pub struct Gam {
    base: ArModel,
    spec: FeatureSpec,
    lambda: Vec<f64>,
}

impl Gam {
    /// New potential with `lambda = 0`, i.e. `P_lambda = r`.
    pub fn new(base: ArModel, spec: FeatureSpec) -> Gam {
        let dim = spec.active_count();
        Gam { base, spec, lambda: vec![0.0; dim] }
    }

    pub fn with_lambda(
        base: ArModel,
        spec: FeatureSpec,
        lambda: Vec<f64>,
    ) -> Result<Gam, GamError> {
        if lambda.len() != spec.active_count() {
            return Err(GamError::DimensionMismatch {
                lambda: lambda.len(),
                features: spec.active_count(),
            });
        }
        Ok(Gam { base, spec, lambda })
    }

    pub fn base(&self) -> &ArModel {
        &self.base
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn seq_len(&self) -> usize {
        self.base.seq_len()
    }

    /// Log of the unnormalized probability:
    /// `log r(x) + <lambda, phi(x)>`.
    pub fn log_potential(&self, x: &BitString) -> Result<f64, GamError> {
        let lp = self.base.log_prob(x)?;
        Ok(lp + self.spec.weighted_phi(&self.lambda, x.as_bits())?)
    }

    /// `log beta = sum_i max(lambda_i, 0)`: a valid upper bound on
    /// `log(P_lambda(x)/r(x)) = <lambda, phi(x)>` because every feature
    /// lies in [0, 1].
    pub fn log_feature_bound(&self) -> f64 {
        self.lambda.iter().map(|l| l.max(0.0)).sum()
    }

    // -- rejection sampling ---------------------------------------------

    /// Draws from `proposal` and accepts with probability
    /// `P_lambda(x) / (beta * proposal(x))` until `count` strings are
    /// accepted. When the proposal is the potential's own base the
    /// acceptance test needs no model scoring; otherwise both log
    /// probabilities are evaluated and the feature bound must still
    /// dominate the ratio (callers keep that true by refitting `lambda`
    /// against the current proposal).
    ///
    /// Deterministic for a fixed seed: draw `i` uses its own RNG stream and
    /// draws are consumed in index order.
    pub fn rejection_sample(
        &self,
        proposal: &ArModel,
        count: usize,
        draw_cap: u64,
        seed: u64,
    ) -> Result<RejectionOutcome, GamError> {
        use rand::Rng as _;

        enum Draw {
            Rejected,
            Accepted(Vec<u8>),
            BoundViolated(f64),
        }

        if count == 0 {
            return Err(GamError::InvalidConfig("count must be >= 1".into()));
        }
        let same_base = proposal.config() == self.base.config()
            && proposal.params() == self.base.params();
        let n = self.seq_len();
        if proposal.seq_len() != n {
            return Err(GamError::InvalidConfig(format!(
                "proposal length {} does not match potential length {n}",
                proposal.seq_len()
            )));
        }
        let log_bound = self.log_feature_bound();
        let kernel = proposal.kernel();
        let base_kernel = self.base.kernel();
        let hidden = proposal.config().hidden_dim;
        let base_hidden = self.base.config().hidden_dim;

        let mut accepted: Vec<BitString> = Vec::with_capacity(count);
        let mut draws: u64 = 0;
        while accepted.len() < count {
            if draws >= draw_cap {
                return Err(GamError::AcceptanceTooLow {
                    accepted: accepted.len(),
                    draws,
                    rate: accepted.len() as f64 / draws as f64,
                });
            }
            let chunk = RS_CHUNK.min((draw_cap - draws) as usize);
            let results: Vec<Draw> = (0..chunk as u64)
                .into_par_iter()
                .map_init(
                    || (StepState::new(hidden), StepState::new(base_hidden)),
                    |(state, base_state), j| {
                        let mut r = rng::stream_rng(seed, draws + j);
                        let bits = kernel.sample(n, &mut r, state);
                        let lw = self
                            .spec
                            .weighted_phi(&self.lambda, &bits)
                            .expect("lambda dimension fixed at construction");
                        let log_accept = if same_base {
                            lw - log_bound
                        } else {
                            let lp_base = base_kernel.score(&bits, base_state);
                            let lp_prop = kernel.score(&bits, state);
                            lp_base + lw - lp_prop - log_bound
                        };
                        if log_accept > 1e-9 {
                            return Draw::BoundViolated(log_accept);
                        }
                        let u: f64 = r.random();
                        if u.ln() < log_accept {
                            Draw::Accepted(bits)
                        } else {
                            Draw::Rejected
                        }
                    },
                )
                .collect();
            for item in results {
                draws += 1;
                match item {
                    Draw::BoundViolated(log_ratio) => {
                        return Err(GamError::BoundViolated { log_ratio });
                    }
                    Draw::Accepted(bits) => {
                        accepted.push(BitString::from_bits(bits));
                        if accepted.len() == count {
                            break;
                        }
                    }
                    Draw::Rejected => {}
                }
            }
        }
        Ok(RejectionOutcome {
            acceptance_rate: count as f64 / draws as f64,
            draws,
            accepted,
        })
    }

    /// Model-moment estimate from `count` exact samples of `p_lambda`
    /// obtained by rejection sampling with the base as proposal.
    pub fn estimate_moments_rs(
        &self,
        count: usize,
        draw_cap: u64,
        seed: u64,
    ) -> Result<RsEstimate, GamError> {
        let outcome = self.rejection_sample(&self.base, count, draw_cap, seed)?;
        let dim = self.lambda.len();
        let mut moments = vec![0.0; dim];
        for x in &outcome.accepted {
            for (m, v) in moments.iter_mut().zip(self.spec.phi(x).values()) {
                *m += v;
            }
        }
        for m in &mut moments {
            *m /= count as f64;
        }
        Ok(RsEstimate {
            moments,
            acceptance_rate: outcome.acceptance_rate,
            draws: outcome.draws,
        })
    }

    // -- self-normalized importance sampling ------------------------------

    /// Fills the reusable buffer with samples of the base model and their
    /// cached feature vectors. Since the base is frozen during training the
    /// buffer is built once; per-update weights are just `exp(<lambda,
    /// phi>)` over the cache.
    pub fn build_snis_buffer(&self, size: usize, seed: u64) -> Result<SnisBuffer, GamError> {
        if size == 0 {
            return Err(GamError::EmptyBuffer);
        }
        let samples = self.base.sample(size, seed);
        let dim = self.spec.active_count();
        let mut phis = Vec::with_capacity(size * dim);
        for x in &samples {
            phis.extend_from_slice(self.spec.phi(x).values());
        }
        Ok(SnisBuffer { dim, len: size, phis })
    }

    /// `E_hat = sum_i w_i phi_i / sum_i w_i` with `w_i = exp(<lambda,
    /// phi_i>)`. Consistent as the buffer grows; exact sample mean at
    /// `lambda = 0`.
    pub fn estimate_moments_snis(&self, buffer: &SnisBuffer) -> Result<SnisEstimate, GamError> {
        if buffer.len == 0 {
            return Err(GamError::EmptyBuffer);
        }
        if buffer.dim != self.lambda.len() {
            return Err(GamError::DimensionMismatch {
                lambda: self.lambda.len(),
                features: buffer.dim,
            });
        }
        let dim = buffer.dim;
        let scores: Vec<f64> = (0..buffer.len)
            .map(|i| {
                let phi = &buffer.phis[i * dim..(i + 1) * dim];
                phi.iter().zip(&self.lambda).map(|(p, l)| p * l).sum()
            })
            .collect();
        let max_score = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max_score.exp() == 0.0 {
            return Err(GamError::DegenerateWeights);
        }
        let mut w_sum = 0.0;
        let mut w2_sum = 0.0;
        let mut moments = vec![0.0; dim];
        for (i, s) in scores.iter().enumerate() {
            let w = (s - max_score).exp();
            w_sum += w;
            w2_sum += w * w;
            let phi = &buffer.phis[i * dim..(i + 1) * dim];
            for (m, p) in moments.iter_mut().zip(phi) {
                *m += w * p;
            }
        }
        for m in &mut moments {
            *m /= w_sum;
        }
        Ok(SnisEstimate {
            moments,
            ess: w_sum * w_sum / w2_sum,
            log_mean_weight: max_score + (w_sum / buffer.len as f64).ln(),
        })
    }

    // -- enumeration oracles ----------------------------------------------

    fn enumerated_log_potentials(&self) -> Result<Vec<f64>, GamError> {
        let n = self.seq_len();
        if n > MAX_ENUM_LEN {
            return Err(GamError::EnumerationTooLarge(n));
        }
        let kernel = self.base.kernel();
        let mut state = StepState::new(self.base.config().hidden_dim);
        BitString::enumerate_all(n)
            .map(|x| {
                let lp = kernel.score(x.as_bits(), &mut state);
                Ok(lp + self.spec.weighted_phi(&self.lambda, x.as_bits())?)
            })
            .collect()
    }

    /// Exact `E_{p_lambda}[phi]` by full enumeration (n <= 12 only).
    pub fn exact_moments(&self) -> Result<Vec<f64>, GamError> {
        let log_pots = self.enumerated_log_potentials()?;
        let log_z = log_sum_exp(&log_pots);
        let n = self.seq_len();
        let dim = self.lambda.len();
        let mut moments = vec![0.0; dim];
        for (x, lp) in BitString::enumerate_all(n).zip(&log_pots) {
            let p = (lp - log_z).exp();
            for (m, v) in moments.iter_mut().zip(self.spec.phi(&x).values()) {
                *m += p * v;
            }
        }
        Ok(moments)
    }

    /// Exact `log Z_lambda` by full enumeration (n <= 12 only).
    pub fn exact_log_partition(&self) -> Result<f64, GamError> {
        Ok(log_sum_exp(&self.enumerated_log_potentials()?))
    }

    /// Exact normalized probabilities of all 2^n strings, in enumeration
    /// order (n <= 12 only).
    pub fn exact_distribution(&self) -> Result<Vec<f64>, GamError> {
        let log_pots = self.enumerated_log_potentials()?;
        let log_z = log_sum_exp(&log_pots);
        Ok(log_pots.iter().map(|lp| (lp - log_z).exp()).collect())
    }

    // -- checkpointing -----------------------------------------------------

    /// Writes the potential as structured text: a reference to the base
    /// model checkpoint plus the weight vector and feature family. The base
    /// checkpoint is written to `ar_path`; the reference stored in the file
    /// is `ar_path` as given (resolved relative to the parent directory of
    /// `path` on load).
    pub fn save(&self, path: &Path, ar_path: &Path) -> Result<(), GamError> {
        let resolved = if ar_path.is_absolute() {
            ar_path.to_path_buf()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(ar_path)
        };
        self.base.save(&resolved)?;
        let file = GamCheckpointFile {
            format: GAM_FORMAT.to_string(),
            version: GAM_VERSION,
            ar_checkpoint: ar_path.to_string_lossy().into_owned(),
            lambda: self.lambda.clone(),
            feature_spec: self.spec.clone(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Gam, GamError> {
        let text = std::fs::read_to_string(path)?;
        let file: GamCheckpointFile = serde_json::from_str(&text)?;
        if file.format != GAM_FORMAT {
            return Err(GamError::BadCheckpoint(format!(
                "unexpected format {:?}",
                file.format
            )));
        }
        if file.version != GAM_VERSION {
            return Err(GamError::BadCheckpoint(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let ar_ref = Path::new(&file.ar_checkpoint);
        let resolved = if ar_ref.is_absolute() {
            ar_ref.to_path_buf()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(ar_ref)
        };
        let base = ArModel::load(&resolved)?;
        Gam::with_lambda(base, file.feature_spec, file.lambda)
    }
}

const GAM_FORMAT: &str = "gam-model";
const GAM_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GamCheckpointFile {
    format: String,
    version: u32,
    ar_checkpoint: String,
    lambda: Vec<f64>,
    feature_spec: FeatureSpec,
}

/// Result of a rejection-sampling run.
#[derive(Debug, Clone)]
pub struct RejectionOutcome {
    pub accepted: Vec<BitString>,
    pub acceptance_rate: f64,
    pub draws: u64,
}

#[derive(Debug, Clone)]
pub struct RsEstimate {
    pub moments: Vec<f64>,
    pub acceptance_rate: f64,
    pub draws: u64,
}

#[derive(Debug, Clone)]
pub struct SnisEstimate {
    pub moments: Vec<f64>,
    /// Effective sample size `(sum w)^2 / sum w^2`.
    pub ess: f64,
    /// `ln((1/N) sum_i w_i)`: a consistent estimate of `ln Z_lambda`.
    pub log_mean_weight: f64,
}

/// Cached base-model samples for the snis estimator: feature vectors only,
/// flattened row-major (the strings themselves are not needed because the
/// proposal factors cancel from the weights).
#[derive(Debug, Clone)]
pub struct SnisBuffer {
    dim: usize,
    len: usize,
    phis: Vec<f64>,
}

impl SnisBuffer {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Settings for fitting `lambda` by moment-matching SGD.
///
/// Defaults follow the training scheme: learning rate schedule
/// `alpha_t = alpha0 / (1 + epoch)` with `alpha0 = 10`, 50 updates per
/// epoch, 10 accepted samples per rejection-sampling update, a
/// 50 000-sample snis buffer, and early stopping on the l1 distance
/// between empirical and (epoch-averaged) model moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Training1Config {
    pub regime: Regime,
    pub alpha0: f64,
    pub updates_per_epoch: usize,
    pub rs_samples_per_update: usize,
    pub rs_draw_cap: u64,
    pub snis_buffer_size: usize,
    pub patience: usize,
    pub min_improvement: f64,
    pub max_epochs: usize,
    /// Also fold the validation set into the empirical target moments.
    /// Off by default: the target is the training data alone.
    pub include_validation: bool,
    pub seed: u64,
}

impl Training1Config {
    pub fn new(regime: Regime, seed: u64) -> Training1Config {
        Training1Config {
            regime,
            alpha0: 10.0,
            updates_per_epoch: 50,
            rs_samples_per_update: 10,
            rs_draw_cap: 10_000_000,
            snis_buffer_size: 50_000,
            patience: 10,
            min_improvement: 1e-3,
            max_epochs: 500,
            include_validation: false,
            seed,
        }
    }

    fn validate(&self) -> Result<(), GamError> {
        if self.alpha0 <= 0.0
            || self.updates_per_epoch == 0
            || self.rs_samples_per_update == 0
            || self.snis_buffer_size == 0
            || self.patience == 0
            || self.max_epochs == 0
        {
            return Err(GamError::InvalidConfig(
                "all Training-1 sizes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Training1Epoch {
    pub epoch: usize,
    pub l1_mom: f64,
    /// Mean acceptance rate over the epoch's updates (rs regime).
    pub acceptance_rate: Option<f64>,
    /// Mean effective sample size over the epoch's updates (snis regime).
    pub ess: Option<f64>,
    pub lambda: Vec<f64>,
}

/// Per-epoch training log; serializable to CSV with one column per active
/// feature weight.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Training1Log {
    pub feature_names: Vec<String>,
    pub epochs: Vec<Training1Epoch>,
}

impl Training1Log {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l1_mom,acceptance_rate,ess");
        for name in &self.feature_names {
            out.push_str(",lambda_");
            out.push_str(name);
        }
        out.push('\n');
        for row in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}",
                row.epoch,
                row.l1_mom,
                row.acceptance_rate.map(|v| v.to_string()).unwrap_or_default(),
                row.ess.map(|v| v.to_string()).unwrap_or_default(),
            ));
            for l in &row.lambda {
                out.push_str(&format!(",{l}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Fits `lambda` on top of a frozen base model by moment matching.
///
/// Every update estimates the model moments (rs or snis), takes an ascent
/// step `lambda += alpha_t * (target - estimate)`, and contributes to a
/// per-epoch running mean of the model moments; the epoch statistic
/// `l1_mom = ||target - mean||_1` drives early stopping, and the weights
/// from the best epoch are returned.
pub fn train_gam(
    base: &ArModel,
    train: &[BitString],
    val: &[BitString],
    spec: FeatureSpec,
    cfg: &Training1Config,
) -> Result<(Gam, Training1Log), GamError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(GamError::Feature(FeatureError::EmptyDataset));
    }
    let target = if cfg.include_validation {
        let mut all: Vec<BitString> = train.to_vec();
        all.extend_from_slice(val);
        spec.empirical_moments(&all)?
    } else {
        spec.empirical_moments(train)?
    };

    let mut gam = Gam::new(base.clone(), spec);
    let dim = gam.lambda.len();
    let buffer = match cfg.regime {
        Regime::Snis => Some(gam.build_snis_buffer(
            cfg.snis_buffer_size,
            rng::child_seed(cfg.seed, "snis-buffer"),
        )?),
        Regime::Rs => None,
    };

    let mut log = Training1Log {
        feature_names: gam
            .spec
            .mask()
            .active_names()
            .iter()
            .map(|s| s.to_string())
            .collect(),
        epochs: Vec::new(),
    };

    let mut best_l1 = f64::INFINITY;
    let mut best_lambda = gam.lambda.clone();
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        let alpha = cfg.alpha0 / (1.0 + epoch as f64);
        let mut mean_moments = vec![0.0; dim];
        let mut stat_acc = 0.0f64;
        for update in 1..=cfg.updates_per_epoch {
            let est_moments = match cfg.regime {
                Regime::Rs => {
                    let est = gam.estimate_moments_rs(
                        cfg.rs_samples_per_update,
                        cfg.rs_draw_cap,
                        rng::child_seed_indexed(
                            cfg.seed,
                            "t1-update",
                            (epoch * cfg.updates_per_epoch + update) as u64,
                        ),
                    )?;
                    stat_acc += est.acceptance_rate;
                    est.moments
                }
                Regime::Snis => {
                    let est = gam.estimate_moments_snis(buffer.as_ref().expect("built above"))?;
                    stat_acc += est.ess;
                    est.moments
                }
            };
            // running mean across the epoch's updates
            let b = update as f64;
            for (avg, m) in mean_moments.iter_mut().zip(&est_moments) {
                *avg += (m - *avg) / b;
            }
            for ((l, t), m) in gam.lambda.iter_mut().zip(&target).zip(&est_moments) {
                *l += alpha * (t - m);
                if !l.is_finite() {
                    return Err(GamError::NonFiniteLambda { epoch });
                }
            }
        }
        let l1_mom: f64 = target
            .iter()
            .zip(&mean_moments)
            .map(|(t, m)| (t - m).abs())
            .sum();
        let stat = stat_acc / cfg.updates_per_epoch as f64;
        log.epochs.push(Training1Epoch {
            epoch,
            l1_mom,
            acceptance_rate: (cfg.regime == Regime::Rs).then_some(stat),
            ess: (cfg.regime == Regime::Snis).then_some(stat),
            lambda: gam.lambda.clone(),
        });

        let improved = l1_mom < best_l1 - cfg.min_improvement;
        if l1_mom < best_l1 {
            best_l1 = l1_mom;
            best_lambda = gam.lambda.clone();
        }
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    gam.lambda = best_lambda;
    Ok((gam, log))
}
