//! Training for the autoregressive model: Adam over minibatches with early
//! stopping on validation cross-entropy, plus the single-batch update used
//! by cyclic distillation.

use rand::seq::SliceRandom as _;
use serde::{Deserialize, Serialize};

use super::{ArError, ArModel, ModelConfig};
use crate::bits::BitString;
use crate::rng;

/// Optimizer and schedule settings.
///
/// Defaults: Adam with learning rate 0.001, early-stopping patience 20
/// epochs, at most 500 epochs, minibatches of 64, embedding 16 and hidden
/// size 64.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            patience: 20,
            max_epochs: 500,
            batch_size: 64,
            embed_dim: 16,
            hidden_dim: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ArError> {
        if self.learning_rate < 0.0
            || self.patience == 0
            || self.max_epochs == 0
            || self.batch_size == 0
        {
            return Err(ArError::InvalidConfig(
                "learning rate must be >= 0 and patience/epochs/batch positive".into(),
            ));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn check_dataset(data: &[BitString], n: usize) -> Result<(), ArError> {
    if data.is_empty() {
        return Err(ArError::EmptyDataset);
    }
    for x in data {
        if x.len() != n {
            return Err(ArError::LengthMismatch { expected: n, found: x.len() });
        }
    }
    Ok(())
}

/// Trains a fresh model on `train`, minimizing mean per-string negative
/// log-likelihood with Adam. Stops when validation cross-entropy fails to
/// improve for `patience` consecutive epochs and returns the parameters
/// from the best validation epoch.
pub fn train_ar(
    train: &[BitString],
    val: &[BitString],
    cfg: &TrainConfig,
) -> Result<ArModel, ArError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(ArError::EmptyDataset);
    }
    let n = train[0].len();
    check_dataset(train, n)?;
    check_dataset(val, n)?;
    let model_cfg = ModelConfig {
        seq_len: n,
        embed_dim: cfg.embed_dim,
        hidden_dim: cfg.hidden_dim,
    };
    let mut model = ArModel::new(model_cfg, rng::child_seed(cfg.seed, "ar-init"))?;
    let mut adam = Adam::new(model.param_count(), cfg.learning_rate);
    let mut shuffle_rng = rng::rng_from_seed(rng::child_seed(cfg.seed, "ar-shuffle"));

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_ce = f64::INFINITY;
    let mut best_params = model.params().to_vec();
    let mut stale = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        order.shuffle(&mut shuffle_rng);
        let mut batch: Vec<BitString> = Vec::with_capacity(cfg.batch_size);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let (loss, grad) = model.nll_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(ArError::Diverged { epoch });
            }
            adam.step(model.params_mut(), &grad);
        }
        let val_ce = model.cross_entropy(val)?;
        if !val_ce.is_finite() {
            return Err(ArError::Diverged { epoch });
        }
        if val_ce < best_ce {
            best_ce = val_ce;
            best_params = model.params().to_vec();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    model.params_mut().copy_from_slice(&best_params);
    model.meta.epochs_run = epochs_run;
    model.meta.best_val_ce = Some(best_ce);
    Ok(model)
}

/// One optimization pass over `batch`: minibatch Adam steps covering the
/// batch once, starting from fresh optimizer state. Used to improve the
/// proposal between distillation batches in cyclic mode.
pub fn single_update(
    model: &ArModel,
    batch: &[BitString],
    cfg: &TrainConfig,
) -> Result<ArModel, ArError> {
    cfg.validate()?;
    check_dataset(batch, model.seq_len())?;
    let mut updated = model.clone();
    let mut adam = Adam::new(updated.param_count(), cfg.learning_rate);
    for chunk in batch.chunks(cfg.batch_size) {
        let (loss, grad) = updated.nll_and_grad(chunk)?;
        if !loss.is_finite() {
            return Err(ArError::Diverged { epoch: 0 });
        }
        adam.step(updated.params_mut(), &grad);
    }
    Ok(updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfsa::{build_motif_automaton, white_noise, MotifMode};

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn tiny_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            embed_dim: 6,
            hidden_dim: 10,
            max_epochs: 200,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn fits_a_point_mass() {
        let d: Vec<BitString> = vec![bs("10110"); 256];
        let v: Vec<BitString> = vec![bs("10110"); 8];
        let cfg = TrainConfig {
            learning_rate: 3e-3,
            max_epochs: 400,
            ..tiny_cfg(3)
        };
        let m = train_ar(&d, &v, &cfg).unwrap();
        assert!(m.meta.best_val_ce.unwrap() < 0.01);
        assert!(m.log_prob(&bs("10110")).unwrap() > -0.05);
    }

    #[test]
    fn training_is_deterministic() {
        let process = white_noise(6).normalize().unwrap();
        let d = process.sample(200, 1);
        let v = process.sample(50, 2);
        let a = train_ar(&d, &v, &tiny_cfg(7)).unwrap();
        let b = train_ar(&d, &v, &tiny_cfg(7)).unwrap();
        assert_eq!(a.params(), b.params());
        let c = train_ar(&d, &v, &tiny_cfg(8)).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn cross_entropy_tracks_process_entropy() {
        // KL >= 0: CE per char over test data cannot drop below the process
        // entropy, up to sampling error on the test set.
        let process = build_motif_automaton(&bs("101"), 10, MotifMode::Contain)
            .unwrap()
            .normalize()
            .unwrap();
        let d = process.sample(2_000, 1);
        let v = process.sample(500, 2);
        let t = process.sample(10_000, 3);
        let m = train_ar(&d, &v, &tiny_cfg(5)).unwrap();
        let ce = m.cross_entropy(&t).unwrap();
        let h_per_char = process.entropy().unwrap() / 10.0;
        assert!(ce >= h_per_char - 0.02, "ce {ce} vs H {h_per_char}");
        // and it should actually learn something beyond white noise
        assert!(ce < 2.0f64.ln());
    }

    #[test]
    fn single_update_descends_on_its_batch() {
        let process = white_noise(8).normalize().unwrap();
        let batch = process.sample(256, 4);
        let mut model = ArModel::new(
            ModelConfig { seq_len: 8, embed_dim: 6, hidden_dim: 10 },
            2,
        )
        .unwrap();
        let cfg = tiny_cfg(0);
        let before = model.cross_entropy(&batch).unwrap();
        for _ in 0..5 {
            model = single_update(&model, &batch, &cfg).unwrap();
        }
        let after = model.cross_entropy(&batch).unwrap();
        assert!(after < before + 1e-6, "{after} vs {before}");
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let model = ArModel::new(
            ModelConfig { seq_len: 6, embed_dim: 6, hidden_dim: 10 },
            2,
        )
        .unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, ..tiny_cfg(0) };
        let batch = white_noise(6).normalize().unwrap().sample(32, 1);
        let updated = single_update(&model, &batch, &cfg).unwrap();
        assert_eq!(model.params(), updated.params());
    }

    #[test]
    fn nan_parameters_surface_as_divergence() {
        let mut model = ArModel::new(
            ModelConfig { seq_len: 6, embed_dim: 6, hidden_dim: 10 },
            2,
        )
        .unwrap();
        model.params_mut()[0] = f64::NAN;
        let batch = white_noise(6).normalize().unwrap().sample(8, 1);
        let err = single_update(&model, &batch, &tiny_cfg(0)).unwrap_err();
        assert!(matches!(err, ArError::Diverged { .. }));
    }

    #[test]
    fn empty_datasets_are_rejected() {
        assert!(matches!(
            train_ar(&[], &[bs("01")], &tiny_cfg(0)),
            Err(ArError::EmptyDataset)
        ));
        assert!(matches!(
            train_ar(&[bs("01")], &[], &tiny_cfg(0)),
            Err(ArError::EmptyDataset)
        ));
    }
}
