//! The G-Mamba denoiser: token embedding, geometric and hierarchical
//! conditioning, timestep modulation and the stacked GSM-SSD blocks.

mod config;
mod features;
mod gmamba;
mod scan;

use thiserror::Error;

use crate::cad::CadError;
use crate::geometry::GeometryError;
use crate::numerics::NumericsError;

pub use config::{ModelConfig, Variant};
pub use features::{timestep_features, Conditioning, Example, TokenInput};
pub use gmamba::{BlockIds, GMamba, KernelSource, EMBED_STD, POS_STD};
pub use scan::{gsm_ssd_layer, gsm_ssd_scan, gsm_ssd_scan_reference, GsmVars, GsmWeights, KernelVars, Kernels};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error("model input: {0}")]
    Input(String),
    #[error("missing or malformed parameter: {0}")]
    Uninitialized(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cad(#[from] CadError),
}
