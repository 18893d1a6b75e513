use serde::{Deserialize, Serialize};

use crate::cad::vocab::{DEFAULT_MAX_LEN, VOCAB_SIZE};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Per-token kernels generated from geometry and tree context.
    GMamba,
    /// Globally shared kernels, no geometric or hierarchical conditioning.
    VanillaSsd,
}

/// Denoiser architecture. Serialized as the model config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub d_e: usize,
    pub d_c: usize,
    pub variant: Variant,
    pub film_enabled: bool,
    /// Causal depthwise kernel width.
    #[serde(rename = "K")]
    pub k: usize,
    pub n_ts: usize,
    #[serde(rename = "V")]
    pub v: usize,
}

impl ModelConfig {
    /// Full-size settings: 12 blocks of width 256.
    pub fn paper() -> Self {
        ModelConfig {
            n_blocks: 12,
            d_e: 256,
            d_c: 16,
            variant: Variant::GMamba,
            film_enabled: true,
            k: 4,
            n_ts: DEFAULT_MAX_LEN,
            v: VOCAB_SIZE,
        }
    }

    /// Desk-scale settings: 4 blocks of width 64.
    pub fn desk() -> Self {
        ModelConfig { n_blocks: 4, d_e: 64, ..Self::paper() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.n_blocks == 0 || self.d_e == 0 || self.d_c == 0 || self.k == 0 || self.n_ts == 0 {
            return bad("n_blocks, d_e, d_c, K and n_ts must be positive");
        }
        if self.d_e % 2 != 0 {
            return bad("d_e must be even for sinusoidal time features");
        }
        if self.v != VOCAB_SIZE {
            return bad("V must equal the vocabulary size 267");
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}
