use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::Example;
use crate::numerics::{AdamW, AdamWConfig, Scalar, Tensor};

use super::schedule::{masked_noise, Schedule};
use super::system::{BatchItem, CadDiffusion, LossBreakdown, DEFAULT_ETA};
use super::DiffusionError;

/// Training settings. Serialized as the training config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(rename = "T")]
    pub t: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub eta: f64,
    pub lr: f64,
    pub betas: [f64; 2],
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stops after this many optimizer steps even if epochs remain.
    pub max_steps: Option<u64>,
    /// Probability of training an item without its conditioning.
    pub cond_dropout: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    /// Write a checkpoint every this many steps (command-line driver).
    pub checkpoint_every: Option<u64>,
}

impl TrainConfig {
    /// Full-scale settings.
    pub fn paper() -> Self {
        TrainConfig {
            t: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            eta: DEFAULT_ETA,
            lr: 1e-4,
            betas: [0.95, 0.99],
            batch: 512,
            epochs: 1000,
            seed: 0,
            max_steps: None,
            cond_dropout: 0.1,
            weight_decay: 0.0,
            clip_norm: Some(1.0),
            checkpoint_every: None,
        }
    }

    /// Desk-scale settings: 50 steps with the 1000-step endpoints scaled by
    /// 20 so the chain still ends near pure noise, batch 16.
    pub fn desk() -> Self {
        TrainConfig { t: 50, beta_min: 2e-3, beta_max: 0.4, lr: 2e-3, batch: 16, epochs: 2000, ..Self::paper() }
    }

    pub fn schedule(&self) -> Result<Schedule, DiffusionError> {
        Schedule::linear(self.t, self.beta_min, self.beta_max)
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig { lr: self.lr, betas: self.betas, weight_decay: self.weight_decay, clip_norm: self.clip_norm, ..AdamWConfig::default() }
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        let bad = |m: String| Err(DiffusionError::Config(m));
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) {
            return bad(format!("cond_dropout {} outside [0, 1]", self.cond_dropout));
        }
        if !(self.eta >= 0.0) || !(self.lr > 0.0) {
            return bad("eta must be non-negative and lr positive".into());
        }
        self.schedule().map(|_| ())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Logged values of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
}

/// Mixes a stream tag and index into a seed.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_PERM: u64 = 1;
const TAG_STEP: u64 = 2;

/// Optimizer state plus the data it iterates over. All randomness of step
/// `k` derives from `(seed, k)`, so resuming from a checkpoint replays the
/// same trajectory.
pub struct Trainer<T> {
    pub system: CadDiffusion<T>,
    pub optimizer: AdamW<T>,
    pub config: TrainConfig,
    pub step: u64,
    data: Vec<Example>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(system: CadDiffusion<T>, config: TrainConfig, data: Vec<Example>) -> Result<Self, DiffusionError> {
        config.validate()?;
        if data.is_empty() {
            return Err(DiffusionError::Input("no training examples".into()));
        }
        let optimizer = AdamW::new(config.optimizer(), &system.params);
        Ok(Trainer { system, optimizer, config, step: 0, data })
    }

    pub fn data(&self) -> &[Example] {
        &self.data
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.data.len().div_ceil(self.config.batch) as u64
    }

    pub fn total_steps(&self) -> u64 {
        let by_epochs = self.config.epochs as u64 * self.steps_per_epoch();
        self.config.max_steps.map_or(by_epochs, |m| m.min(by_epochs))
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.total_steps()
    }

    /// Dataset indices of the batch at `step`.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let (epoch, k) = (step / spe, (step % spe) as usize);
        let mut perm: Vec<usize> = (0..self.data.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, TAG_PERM, epoch)));
        let b = self.config.batch;
        perm[k * b..((k + 1) * b).min(perm.len())].to_vec()
    }

    fn batch(&self, step: u64) -> Vec<BatchItem<'_, T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, TAG_STEP, step));
        let d = self.system.config().d_e;
        self.batch_indices(step)
            .into_iter()
            .map(|i| {
                let example = &self.data[i];
                let l = example.len();
                let t = rng.gen_range(1..=self.config.t);
                let eps = masked_noise(l, d, l, &mut rng);
                let drop_cond = rng.gen_bool(self.config.cond_dropout);
                BatchItem { example, t, eps, drop_cond }
            })
            .collect()
    }

    /// Runs one optimizer step.
    pub fn train_step(&mut self) -> Result<StepLog, DiffusionError> {
        let batch = self.batch(self.step);
        let (loss, grads) = self.system.loss_and_grads(&batch, self.config.eta)?;
        if !loss.total.is_finite() {
            return Err(crate::numerics::NumericsError::NonFinite { op: "loss" }.into());
        }
        let grad_norm = self.optimizer.update(&mut self.system.params, &grads)?;
        let log = StepLog { step: self.step, loss, grad_norm };
        self.step += 1;
        Ok(log)
    }

    /// Trains until [`Self::total_steps`], reporting every step.
    pub fn run(&mut self, mut on_step: impl FnMut(&Self, &StepLog) -> Result<(), DiffusionError>) -> Result<(), DiffusionError> {
        while !self.is_done() {
            let log = self.train_step()?;
            on_step(self, &log)?;
        }
        Ok(())
    }

    /// Valid lengths of the training data, for unconditional sampling.
    pub fn lengths(&self) -> Vec<usize> {
        self.data.iter().map(|e| e.len()).collect()
    }

    /// Parameters, optimizer moments and progress in one checkpoint.
    pub fn checkpoint(&self) -> Vec<u8> {
        let meta = json!({
            "train": self.config,
            "step": self.step,
            "adam_step": self.optimizer.step,
            "lengths": self.lengths(),
        });
        let names: Vec<String> = self.system.params.iter().map(|(_, n, _)| n.to_string()).collect();
        let mut extra: Vec<(String, &Tensor<T>)> = Vec::new();
        for (i, n) in names.iter().enumerate() {
            extra.push((format!("adam.m.{n}"), &self.optimizer.m[i]));
            extra.push((format!("adam.v.{n}"), &self.optimizer.v[i]));
        }
        self.system.to_checkpoint(meta, &extra)
    }

    /// Restores a trainer from [`Self::checkpoint`] output over the same data.
    pub fn resume(bytes: &[u8], data: Vec<Example>) -> Result<Self, DiffusionError> {
        let (system, meta, extra) = CadDiffusion::<T>::from_checkpoint(bytes)?;
        let config: TrainConfig = serde_json::from_value(meta["train"].clone())
            .map_err(|e| DiffusionError::Config(format!("checkpoint train config: {e}")))?;
        let mut trainer = Trainer::new(system, config, data)?;
        trainer.step = meta["step"].as_u64().ok_or_else(|| DiffusionError::Config("checkpoint lacks step".into()))?;
        trainer.optimizer.step = meta["adam_step"].as_u64().unwrap_or(trainer.step);
        let mut extra: std::collections::HashMap<String, Tensor<T>> = extra.into_iter().collect();
        let names: Vec<String> = trainer.system.params.iter().map(|(_, n, _)| n.to_string()).collect();
        for (i, n) in names.iter().enumerate() {
            for (key, slot) in [(format!("adam.m.{n}"), &mut trainer.optimizer.m[i]), (format!("adam.v.{n}"), &mut trainer.optimizer.v[i])] {
                let t = extra.remove(&key).ok_or_else(|| DiffusionError::Config(format!("checkpoint lacks {key}")))?;
                if t.shape() != slot.shape() {
                    return Err(DiffusionError::Config(format!("{key} has shape {:?}", t.shape())));
                }
                *slot = t;
            }
        }
        Ok(trainer)
    }
}
