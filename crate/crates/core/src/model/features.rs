use crate::cad::{CadSequence, CadTree, TokenRole};
use crate::geometry::{token_features, GeomDescriptors, TreeContext};
use crate::numerics::{Scalar, Tensor};

use super::ModelError;

/// Per-token conditioning over the valid prefix of a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub desc: GeomDescriptors,
    pub ctx: TreeContext,
}

impl Conditioning {
    /// No geometry and no tree context: zero descriptors and pad roles.
    pub fn empty(len: usize) -> Self {
        Conditioning { desc: GeomDescriptors::zeros(len), ctx: TreeContext::empty(len) }
    }

    /// Conditioning for the valid prefix of `seq`, which must serialize `tree`.
    pub fn from_tree(tree: &CadTree, seq: &CadSequence) -> Result<Self, ModelError> {
        let (mut desc, mut ctx) = token_features(tree, seq)?;
        let n = seq.valid_len;
        desc.s.truncate(n);
        desc.d.truncate(n);
        desc.r.truncate(n);
        ctx.parent.truncate(n);
        ctx.sibling.truncate(n);
        ctx.role.truncate(n);
        Ok(Conditioning { desc, ctx })
    }

    pub fn len(&self) -> usize {
        self.desc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.desc.is_empty()
    }

    pub fn check(&self, len: usize) -> Result<(), ModelError> {
        let ok = [self.desc.s.len(), self.desc.d.len(), self.desc.r.len(), self.ctx.parent.len(), self.ctx.sibling.len(), self.ctx.role.len()]
            .iter()
            .all(|&n| n == len);
        if !ok {
            return Err(ModelError::Input(format!("conditioning is not aligned with {len} tokens")));
        }
        if self.ctx.role.iter().any(|&r| r as usize >= TokenRole::COUNT) {
            return Err(ModelError::Input("token role out of range".into()));
        }
        Ok(())
    }

    /// `L × 3` matrix of normalized `(s, d/5, ln(1 + r))`.
    pub fn features<T: Scalar>(&self) -> Tensor<T> {
        let n = self.len();
        let mut data = Vec::with_capacity(3 * n);
        for k in 0..n {
            data.push(T::of(self.desc.s[k]));
            data.push(T::of(self.desc.d[k] as f64 / 5.0));
            data.push(T::of(self.desc.r[k].ln_1p()));
        }
        Tensor::matrix(n, 3, data).expect("3 columns")
    }
}

/// Token ids and flags over the valid prefix of a sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenInput {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub types: Vec<usize>,
    pub steps: Vec<usize>,
}

impl TokenInput {
    pub fn from_sequence(seq: &CadSequence) -> Self {
        let n = seq.valid_len;
        TokenInput {
            a: seq.tokens[..n].iter().map(|t| t.a.get() as usize).collect(),
            b: seq.tokens[..n].iter().map(|t| t.b.get() as usize).collect(),
            types: seq.type_flags[..n].iter().map(|&t| t as usize).collect(),
            steps: seq.step_flags[..n].iter().map(|&s| s as usize).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// A training or evaluation item: the sequence with its model inputs.
#[derive(Clone, Debug)]
pub struct Example {
    pub seq: CadSequence,
    pub tokens: TokenInput,
    pub cond: Conditioning,
}

impl Example {
    pub fn from_tree(tree: &CadTree, n_ts: usize) -> Result<Self, ModelError> {
        let seq = crate::cad::serialize_tree(tree, n_ts)?;
        let cond = Conditioning::from_tree(tree, &seq)?;
        Ok(Example { tokens: TokenInput::from_sequence(&seq), seq, cond })
    }

    pub fn len(&self) -> usize {
        self.seq.valid_len
    }

    pub fn is_empty(&self) -> bool {
        self.seq.valid_len == 0
    }
}

/// Sinusoidal features of a diffusion step, width `d` (even).
pub fn timestep_features<T: Scalar>(t: usize, d: usize) -> Tensor<T> {
    let half = d / 2;
    let mut data = Vec::with_capacity(d);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        data.push(T::of((t as f64 * freq).sin()));
    }
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        data.push(T::of((t as f64 * freq).cos()));
    }
    Tensor::row(data)
}
