//! Autoregressive next-bit model over fixed-length binary strings.
//!
//! Used both for the base model `r` (the proposal distribution) and for the
//! distilled model. The network is a single-layer LSTM with an input
//! embedding and a two-way softmax per position; gradients are computed
//! analytically (backpropagation through time) and checked against finite
//! differences in the tests.

mod lstm;
mod train;

use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::rng;

pub use train::{single_update, train_ar, TrainConfig};

pub(crate) use lstm::{Kernel, Layout, StepState, Workspace};

/// Number of contiguous slices a dataset is split into for parallel
/// gradient and scoring work. Fixed (rather than derived from the thread
/// count) so reductions happen in a machine-independent order.
pub(crate) const PAR_LANES: usize = 8;

#[derive(Debug, Error)]
pub enum ArError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("string length {found} does not match model length {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Architecture of the next-bit model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl ModelConfig {
    /// Default capacity: embedding 16, one recurrent layer of 64 units.
    pub fn new(seq_len: usize) -> ModelConfig {
        ModelConfig { seq_len, embed_dim: 16, hidden_dim: 64 }
    }

    fn validate(&self) -> Result<(), ArError> {
        if self.seq_len == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(ArError::InvalidConfig(
                "seq_len, embed_dim and hidden_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Training provenance kept alongside the parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub best_val_ce: Option<f64>,
}

/// The autoregressive model: flat parameter vector plus its layout.
#[derive(Debug, Clone)]
pub struct ArModel {
    cfg: ModelConfig,
    params: Vec<f64>,
    pub meta: TrainMeta,
}

impl ArModel {
    /// Fresh model with parameters drawn uniformly from [-0.08, 0.08].
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<ArModel, ArError> {
        cfg.validate()?;
        let layout = Layout::new(cfg.embed_dim, cfg.hidden_dim);
        let mut r = rng::rng_from_seed(seed);
        use rand::Rng as _;
        let params = (0..layout.total).map(|_| r.random_range(-0.08..0.08)).collect();
        Ok(ArModel { cfg, params, meta: TrainMeta::default() })
    }

    pub fn config(&self) -> ModelConfig {
        self.cfg
    }

    pub fn seq_len(&self) -> usize {
        self.cfg.seq_len
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.cfg.embed_dim, self.cfg.hidden_dim)
    }

    pub(crate) fn kernel(&self) -> Kernel<'_> {
        Kernel::new(self.layout(), &self.params)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Raw parameter access, used by the optimizer and by gradient checks.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Zeroes the output projection, making every conditional exactly
    /// uniform. Useful as a known baseline in tests and diagnostics.
    pub fn zero_output_layer(&mut self) {
        let range = self.layout().output_range();
        self.params[range].fill(0.0);
    }

    fn check_len(&self, x: &BitString) -> Result<(), ArError> {
        if x.len() != self.cfg.seq_len {
            return Err(ArError::LengthMismatch {
                expected: self.cfg.seq_len,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Total log-probability of `x` in nats: the sum of per-position
    /// next-bit conditionals. Per-character values divide by `seq_len`.
    pub fn log_prob(&self, x: &BitString) -> Result<f64, ArError> {
        self.check_len(x)?;
        let kernel = self.kernel();
        let mut state = StepState::new(self.cfg.hidden_dim);
        Ok(kernel.score(x.as_bits(), &mut state))
    }

    /// Log-probabilities of many strings (parallel over fixed lanes).
    pub fn log_probs(&self, data: &[BitString]) -> Result<Vec<f64>, ArError> {
        for x in data {
            self.check_len(x)?;
        }
        let kernel = self.kernel();
        let lane_len = data.len().div_ceil(PAR_LANES).max(1);
        let out: Vec<Vec<f64>> = data
            .par_chunks(lane_len)
            .map(|chunk| {
                let mut state = StepState::new(self.cfg.hidden_dim);
                chunk.iter().map(|x| kernel.score(x.as_bits(), &mut state)).collect()
            })
            .collect();
        Ok(out.concat())
    }

    /// Draws `count` strings by ancestral sampling; deterministic for a
    /// fixed seed regardless of thread count (per-string RNG streams).
    pub fn sample(&self, count: usize, seed: u64) -> Vec<BitString> {
        let kernel = self.kernel();
        (0..count as u64)
            .into_par_iter()
            .map_init(
                || StepState::new(self.cfg.hidden_dim),
                |state, i| {
                    let mut r = rng::stream_rng(seed, i);
                    BitString::from_bits(kernel.sample(self.cfg.seq_len, &mut r, state))
                },
            )
            .collect()
    }

    /// Mean negative log-likelihood per character over a dataset:
    /// `-(1/|T|) * sum log p(x) / seq_len`.
    pub fn cross_entropy(&self, data: &[BitString]) -> Result<f64, ArError> {
        if data.is_empty() {
            return Err(ArError::EmptyDataset);
        }
        let lps = self.log_probs(data)?;
        let mean_nll = -lps.iter().sum::<f64>() / data.len() as f64;
        Ok(mean_nll / self.cfg.seq_len as f64)
    }

    /// Mean per-string negative log-likelihood over `batch` and its
    /// gradient with respect to the parameters.
    pub fn nll_and_grad(&self, batch: &[BitString]) -> Result<(f64, Vec<f64>), ArError> {
        if batch.is_empty() {
            return Err(ArError::EmptyDataset);
        }
        for x in batch {
            self.check_len(x)?;
        }
        let kernel = self.kernel();
        let layout = self.layout();
        let lane_len = batch.len().div_ceil(PAR_LANES).max(1);
        let partials: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(lane_len)
            .map(|chunk| {
                let mut ws = Workspace::new(self.cfg.seq_len, self.cfg.hidden_dim);
                let mut grad = vec![0.0; layout.total];
                let mut nll = 0.0;
                for x in chunk {
                    nll -= kernel.forward(x.as_bits(), &mut ws);
                    kernel.backward(x.as_bits(), &mut ws, &mut grad);
                }
                (nll, grad)
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; layout.total];
        let mut nll = 0.0;
        for (lane_nll, lane_grad) in partials {
            nll += lane_nll;
            for (g, lg) in grad.iter_mut().zip(&lane_grad) {
                *g += lg;
            }
        }
        for g in &mut grad {
            *g *= scale;
        }
        Ok((nll * scale, grad))
    }

    // -- checkpointing ----------------------------------------------------

    /// Writes a versioned checkpoint; parameters round-trip bit-exactly.
    pub fn save(&self, path: &Path) -> Result<(), ArError> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.cfg,
            meta: self.meta.clone(),
            params: self.params.clone(),
        };
        let text = serde_json::to_string(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ArModel, ArError> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(ArError::BadCheckpoint(format!(
                "unexpected format {:?}",
                file.format
            )));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(ArError::BadCheckpoint(format!(
                "unsupported version {}",
                file.version
            )));
        }
        file.config.validate()?;
        let expected = Layout::new(file.config.embed_dim, file.config.hidden_dim).total;
        if file.params.len() != expected {
            return Err(ArError::BadCheckpoint(format!(
                "parameter count {} does not match config (expected {expected})",
                file.params.len()
            )));
        }
        Ok(ArModel {
            cfg: file.config,
            params: file.params,
            meta: file.meta,
        })
    }
}

const CHECKPOINT_FORMAT: &str = "gam-ar-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    meta: TrainMeta,
    params: Vec<f64>,
}
