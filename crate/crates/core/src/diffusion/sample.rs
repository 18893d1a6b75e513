use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cad::{deserialize_sequence, CadSequence};
use crate::decoder::assemble;
use crate::model::{Conditioning, Example};
use crate::numerics::{Scalar, Tensor};

use super::schedule::{estimate_z0, forward_sample, masked_noise, reverse_step};
use super::system::CadDiffusion;
use super::train::derive_seed;
use super::DiffusionError;

const TAG_SAMPLE: u64 = 3;
const TAG_CHAIN: u64 = 4;

/// A generated sequence and whether it parses back into a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub seq: CadSequence,
    pub parses: bool,
    pub error: Option<String>,
}

impl Generated {
    fn new(seq: CadSequence) -> Self {
        match deserialize_sequence(&seq) {
            Ok(_) => Generated { seq, parses: true, error: None },
            Err(e) => Generated { seq, parses: false, error: Some(e.to_string()) },
        }
    }
}

/// How a ground-truth example is reconstructed for paired evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "t")]
pub enum PairedMode {
    /// Corrupt to step `t`, predict the noise once and decode `Ẑ_0`.
    OneShot(usize),
    /// Corrupt to step `t` and run the deterministic reverse chain to 0,
    /// conditioned on the example's geometry and tree context.
    Chain(usize),
}

impl<T: Scalar> CadDiffusion<T> {
    /// Decodes `L × d_e` features into a sequence padded to `max_len`.
    pub fn decode(&self, z: &Tensor<T>, max_len: usize) -> Result<CadSequence, DiffusionError> {
        let l = z.rows();
        if l > max_len {
            return Err(DiffusionError::Input(format!("{l} rows exceed max length {max_len}")));
        }
        let mut data = z.data().to_vec();
        data.resize(max_len * z.cols(), T::zero());
        let padded = Tensor::matrix(max_len, z.cols(), data)?;
        let dist = self.decoder.decode_distributions(&self.params, &padded, l)?;
        Ok(assemble(&dist)?)
    }

    /// Runs the reverse chain from `z` at step `t_start` down to 0.
    pub fn reverse_chain(
        &self,
        mut z: Tensor<T>,
        t_start: usize,
        cond: &Conditioning,
        seed: u64,
        deterministic: bool,
    ) -> Result<Tensor<T>, DiffusionError> {
        self.schedule.check_t(t_start, true)?;
        let l = z.rows();
        for t in (1..=t_start).rev() {
            let eps_hat = self.predict_noise(&z, t, cond)?;
            z = reverse_step(&self.schedule, &z, t, &eps_hat, derive_seed(seed, TAG_CHAIN, t as u64), deterministic, l)?;
        }
        Ok(z)
    }

    /// Unconditional generation of `n` sequences. Each length is drawn from
    /// `lengths` (typically the training lengths); the chain starts from
    /// standard noise and runs with empty conditioning.
    pub fn sample(&self, n: usize, seed: u64, lengths: &[usize]) -> Result<Vec<Generated>, DiffusionError> {
        if lengths.is_empty() {
            return Err(DiffusionError::Input("no length distribution to sample from".into()));
        }
        let max_len = self.config().n_ts;
        let d = self.config().d_e;
        (0..n)
            .map(|i| {
                let s = derive_seed(seed, TAG_SAMPLE, i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let l = *lengths.choose(&mut rng).expect("non-empty").min(&max_len);
                let z_t = masked_noise(l, d, l, &mut rng);
                let z0 = self.reverse_chain(z_t, self.schedule.t_max, &Conditioning::empty(l), s, false)?;
                Ok(Generated::new(self.decode(&z0, max_len)?))
            })
            .collect()
    }

    /// Reconstruction of a ground-truth example for paired evaluation.
    pub fn reconstruct(&self, ex: &Example, mode: PairedMode, seed: u64) -> Result<CadSequence, DiffusionError> {
        let z0 = self.embed_example(ex)?;
        let l = ex.len();
        let max_len = ex.seq.len();
        match mode {
            PairedMode::OneShot(t) => {
                self.schedule.check_t(t, false)?;
                let (z_t, _) = forward_sample(&self.schedule, &z0, l, t, seed)?;
                let eps_hat = self.predict_noise(&z_t, t, &ex.cond)?;
                self.decode(&estimate_z0(&self.schedule, &z_t, t, &eps_hat)?, max_len)
            }
            PairedMode::Chain(t) => {
                let (z_t, _) = forward_sample(&self.schedule, &z0, l, t, seed)?;
                let z = self.reverse_chain(z_t, t, &ex.cond, seed, true)?;
                self.decode(&z, max_len)
            }
        }
    }
}
