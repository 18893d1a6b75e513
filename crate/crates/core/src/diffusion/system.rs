use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cad::vocab::VOCAB_SIZE;
use crate::decoder::{self, CadDecoder};
use crate::model::{Conditioning, Example, GMamba, ModelConfig};
use crate::numerics::{read_checkpoint, write_checkpoint, BoundParams, ParamStore, Scalar, Tape, Tensor, Var};

use super::schedule::Schedule;
use super::DiffusionError;

/// Weight of the argument cross-entropy against the command term.
pub const DEFAULT_ETA: f64 = 2.0;

/// Per-term values of the composite loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub diffusion: f64,
    pub cmd: f64,
    /// Unweighted argument cross-entropy (group `a` plus group `b`).
    pub args: f64,
}

/// One element of a training batch: which example, its timestep and noise,
/// and whether its conditioning is dropped.
#[derive(Clone, Debug)]
pub struct BatchItem<'a, T> {
    pub example: &'a Example,
    pub t: usize,
    /// `L × d_e` noise over the valid prefix.
    pub eps: Tensor<T>,
    pub drop_cond: bool,
}

/// The denoiser, decoder heads and schedule sharing one parameter store.
#[derive(Clone, Debug)]
pub struct CadDiffusion<T> {
    pub params: ParamStore<T>,
    pub encoder: GMamba,
    pub decoder: CadDecoder,
    pub schedule: Schedule,
}

/// Tape handles of one example's loss terms.
struct Terms {
    diffusion: Var,
    cmd: Var,
    args: Var,
}

impl<T: Scalar> CadDiffusion<T> {
    pub fn new(config: ModelConfig, schedule: Schedule, rng: &mut impl Rng) -> Result<Self, DiffusionError> {
        let mut params = ParamStore::new();
        let encoder = GMamba::new(config.clone(), &mut params, rng)?;
        let decoder = CadDecoder::new(config.d_e, config.v, &mut params, rng)?;
        Ok(CadDiffusion { params, encoder, decoder, schedule })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.encoder.config
    }

    fn terms(&self, tape: &mut Tape<T>, bp: &BoundParams, item: &BatchItem<'_, T>) -> Result<Terms, DiffusionError> {
        let ex = item.example;
        let l = ex.len();
        let s = &self.schedule;
        s.check_t(item.t, false)?;
        if item.eps.shape() != [l, self.config().d_e] {
            return Err(DiffusionError::Input(format!("noise of shape {:?} for {l} tokens", item.eps.shape())));
        }
        let ab = s.alpha_bar(item.t);
        let z0 = self.encoder.embed_var(tape, bp, &ex.tokens)?;
        let eps = tape.constant(item.eps.clone())?;
        let zs = tape.scale(z0, ab.sqrt())?;
        let es = tape.scale(eps, (1.0 - ab).sqrt())?;
        let z_t = tape.add(zs, es)?;
        let empty;
        let cond = if item.drop_cond {
            empty = Conditioning::empty(l);
            &empty
        } else {
            &ex.cond
        };
        let eps_hat = self.encoder.denoise_var(tape, bp, z_t, item.t, cond)?;
        let diffusion = tape.mse(eps_hat, eps)?;
        // Ẑ_0 = (Z_t − √(1−ᾱ) ε̂) / √ᾱ
        let e_s = tape.scale(eps_hat, (1.0 - ab).sqrt())?;
        let diff = tape.sub(z_t, e_s)?;
        let z0_hat = tape.scale(diff, 1.0 / ab.sqrt())?;
        let (cmd_logits, arg_logits) = self.decoder.logits_var(tape, bp, z0_hat)?;
        let (tc, ta, tb) = decoder::targets(&ex.seq);
        let cmd = tape.cross_entropy(cmd_logits, &tc)?;
        let v = self.decoder.v;
        let la = tape.slice_cols(arg_logits, 0, v)?;
        let lb = tape.slice_cols(arg_logits, v, v)?;
        let ca = tape.cross_entropy(la, &ta)?;
        let cb = tape.cross_entropy(lb, &tb)?;
        let args = tape.add(ca, cb)?;
        Ok(Terms { diffusion, cmd, args })
    }

    /// Records the batch-mean loss `‖ε − ε̂‖² + CE_cmd + η·CE_args`.
    pub fn loss_var(
        &self,
        tape: &mut Tape<T>,
        bp: &BoundParams,
        batch: &[BatchItem<'_, T>],
        eta: f64,
    ) -> Result<(Var, LossBreakdown), DiffusionError> {
        if batch.is_empty() {
            return Err(DiffusionError::Input("empty batch".into()));
        }
        if !(eta >= 0.0) {
            return Err(DiffusionError::Config(format!("eta {eta} must be non-negative")));
        }
        let mut total: Option<Var> = None;
        let mut parts = LossBreakdown::default();
        let n = batch.len() as f64;
        for item in batch {
            let t = self.terms(tape, bp, item)?;
            let weighted = tape.scale(t.args, eta)?;
            let dc = tape.add(t.diffusion, t.cmd)?;
            let sum = tape.add(dc, weighted)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, sum)?,
                None => sum,
            });
            parts.diffusion += tape.value(t.diffusion).item().f64() / n;
            parts.cmd += tape.value(t.cmd).item().f64() / n;
            parts.args += tape.value(t.args).item().f64() / n;
        }
        let total = tape.scale(total.expect("non-empty batch"), 1.0 / n)?;
        parts.total = tape.value(total).item().f64();
        Ok((total, parts))
    }

    /// Loss value and gradients, one tensor per parameter in store order.
    pub fn loss_and_grads(&self, batch: &[BatchItem<'_, T>], eta: f64) -> Result<(LossBreakdown, Vec<Tensor<T>>), DiffusionError> {
        let mut tape = Tape::new();
        let bp = self.params.bind(&mut tape)?;
        let (loss, parts) = self.loss_var(&mut tape, &bp, batch, eta)?;
        tape.backward(loss)?;
        Ok((parts, bp.grads(&tape)))
    }

    /// Embedding of the valid prefix of an example, `L × d_e`.
    pub fn embed_example(&self, ex: &Example) -> Result<Tensor<T>, DiffusionError> {
        let mut tape = Tape::new();
        let bp = self.params.bind(&mut tape)?;
        let z = self.encoder.embed_var(&mut tape, &bp, &ex.tokens)?;
        Ok(tape.value(z).clone())
    }

    /// `ε̂` for an unpadded `Z_t`.
    pub fn predict_noise(&self, z_t: &Tensor<T>, t: usize, cond: &Conditioning) -> Result<Tensor<T>, DiffusionError> {
        Ok(self.encoder.denoise(&self.params, z_t, t, cond)?)
    }

    /// Serializes the parameters with `meta` (the model config is added
    /// under `"model"`). Extra tensors such as optimizer moments may be
    /// appended.
    pub fn to_checkpoint(&self, mut meta: Value, extra: &[(String, &Tensor<T>)]) -> Vec<u8> {
        meta["model"] = json!(self.config());
        meta["schedule"] = json!(self.schedule);
        let mut tensors: Vec<(&str, &Tensor<T>)> = self.params.iter().map(|(_, n, t)| (n, t)).collect();
        tensors.extend(extra.iter().map(|(n, t)| (n.as_str(), *t)));
        write_checkpoint(&meta, &tensors)
    }

    /// Restores a system written by [`Self::to_checkpoint`], returning its
    /// metadata and any tensors that are not model parameters.
    pub fn from_checkpoint(bytes: &[u8]) -> Result<(Self, Value, Vec<(String, Tensor<T>)>), DiffusionError> {
        let (meta, tensors) = read_checkpoint::<T>(bytes)?;
        let config: ModelConfig = serde_json::from_value(meta["model"].clone())
            .map_err(|e| DiffusionError::Config(format!("checkpoint model config: {e}")))?;
        let schedule: Schedule = serde_json::from_value(meta["schedule"].clone())
            .map_err(|e| DiffusionError::Config(format!("checkpoint schedule: {e}")))?;
        let mut owned: Vec<String> = GMamba::param_names(&config);
        owned.extend(crate::decoder::param_names());
        let mut params = ParamStore::new();
        let mut extra = Vec::new();
        let mut by_name: std::collections::HashMap<String, Tensor<T>> = std::collections::HashMap::new();
        for (name, t) in tensors {
            if owned.contains(&name) {
                by_name.insert(name, t);
            } else {
                extra.push((name, t));
            }
        }
        for name in owned {
            let t = by_name.remove(&name).ok_or_else(|| DiffusionError::Config(format!("checkpoint lacks {name}")))?;
            params.add(name, t)?;
        }
        let encoder = GMamba::from_store(config.clone(), &params)?;
        let decoder = CadDecoder::from_store(config.d_e, VOCAB_SIZE, &params)?;
        Ok((CadDiffusion { params, encoder, decoder, schedule }, meta, extra))
    }
}
