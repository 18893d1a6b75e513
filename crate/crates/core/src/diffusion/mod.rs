//! Noise schedule, forward corruption, reverse denoising, the composite
//! training objective, training loop and sampling.

mod sample;
mod schedule;
mod system;
mod train;

use thiserror::Error;

use crate::cad::CadError;
use crate::decoder::DecoderError;
use crate::model::ModelError;
use crate::numerics::NumericsError;

pub use sample::{Generated, PairedMode};
pub use schedule::{corrupt, estimate_z0, forward_sample, masked_noise, reverse_step, Schedule};
pub use system::{BatchItem, CadDiffusion, LossBreakdown, DEFAULT_ETA};
pub use train::{derive_seed, StepLog, TrainConfig, Trainer};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("diffusion config: {0}")]
    Config(String),
    #[error("diffusion input: {0}")]
    Input(String),
    #[error("timestep {t} outside 1..={t_max}")]
    Timestep { t: usize, t_max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Cad(#[from] CadError),
}

impl DiffusionError {
    /// True when the failure is a non-finite value somewhere in the graph.
    pub fn is_non_finite(&self) -> bool {
        matches!(
            self,
            DiffusionError::Numerics(NumericsError::NonFinite { .. })
                | DiffusionError::Model(ModelError::Numerics(NumericsError::NonFinite { .. }))
                | DiffusionError::Decoder(DecoderError::Numerics(NumericsError::NonFinite { .. }))
        )
    }
}
