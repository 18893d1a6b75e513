//! Command and argument heads over denoised features, and argmax assembly
//! into token sequences.

use rand::Rng;
use thiserror::Error;

use crate::cad::vocab::{N_TOKEN_TYPES, PAD};
use crate::cad::{CadError, CadSequence, TokenId, TokenPair, TokenType};
use crate::numerics::{softmax_in_place, BoundParams, NumericsError, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("decoder input: {0}")]
    Input(String),
    #[error("missing or malformed parameter: {0}")]
    Uninitialized(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Cad(#[from] CadError),
}

/// Number of command classes.
pub const N_CMD: usize = N_TOKEN_TYPES;

/// The two heads: a linear command classifier and a three-layer argument
/// perceptron (hidden width `4·d_e`) emitting two `V`-way groups per token.
/// Parameters live under the `dec.` prefix.
#[derive(Clone, Debug)]
pub struct CadDecoder {
    pub d_e: usize,
    pub v: usize,
    cmd: [ParamId; 2],
    args: [ParamId; 6],
}

fn layout(d: usize, v: usize) -> Vec<(&'static str, Vec<usize>, usize)> {
    // (name, shape, fan_in); fan_in 0 marks a bias
    vec![
        ("dec.cmd.w", vec![d, N_CMD], d),
        ("dec.cmd.b", vec![1, N_CMD], 0),
        ("dec.args1.w", vec![d, 4 * d], d),
        ("dec.args1.b", vec![1, 4 * d], 0),
        ("dec.args2.w", vec![4 * d, 4 * d], 4 * d),
        ("dec.args2.b", vec![1, 4 * d], 0),
        ("dec.args3.w", vec![4 * d, 2 * v], 4 * d),
        ("dec.args3.b", vec![1, 2 * v], 0),
    ]
}

/// Names of the decoder parameters.
pub fn param_names() -> Vec<String> {
    layout(0, 0).into_iter().map(|(n, _, _)| n.to_string()).collect()
}

/// Softmax probabilities for a padded sequence. Rows at and beyond
/// `valid_len` are emitted but carry no prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Distributions<T> {
    /// `n × N_CMD`.
    pub cmd: Tensor<T>,
    /// `n × 2V`: group `a` then group `b`.
    pub args: Tensor<T>,
    pub valid_len: usize,
}

impl<T: Scalar> Distributions<T> {
    pub fn len(&self) -> usize {
        self.cmd.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_padded(&self, row: usize) -> bool {
        row >= self.valid_len
    }
}

impl CadDecoder {
    pub fn new<T: Scalar>(d_e: usize, v: usize, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self, DecoderError> {
        for (name, shape, fan_in) in layout(d_e, v) {
            let t = match fan_in {
                0 => Tensor::zeros(&shape),
                f => Tensor::randn(&shape, 1.0 / (f as f64).sqrt(), rng),
            };
            store.add(name, t)?;
        }
        Self::from_store(d_e, v, store)
    }

    pub fn from_store<T: Scalar>(d_e: usize, v: usize, store: &ParamStore<T>) -> Result<Self, DecoderError> {
        let mut ids = Vec::new();
        for (name, shape, _) in layout(d_e, v) {
            let id = store.id(name).ok_or_else(|| DecoderError::Uninitialized(name.into()))?;
            if store.get(id).shape() != shape.as_slice() {
                return Err(DecoderError::Uninitialized(format!("{name} has shape {:?}", store.get(id).shape())));
            }
            ids.push(id);
        }
        Ok(CadDecoder { d_e, v, cmd: [ids[0], ids[1]], args: [ids[2], ids[3], ids[4], ids[5], ids[6], ids[7]] })
    }

    /// Command logits (`L × N_CMD`) and argument logits (`L × 2V`).
    pub fn logits_var<T: Scalar>(&self, tape: &mut Tape<T>, bp: &BoundParams, z: Var) -> Result<(Var, Var), DecoderError> {
        let cmd = tape.linear(z, bp.var(self.cmd[0]), bp.var(self.cmd[1]))?;
        let a = &self.args;
        let h = tape.linear(z, bp.var(a[0]), bp.var(a[1]))?;
        let h = tape.silu(h)?;
        let h = tape.linear(h, bp.var(a[2]), bp.var(a[3]))?;
        let h = tape.silu(h)?;
        let args = tape.linear(h, bp.var(a[4]), bp.var(a[5]))?;
        Ok((cmd, args))
    }

    /// Distributions for `n × d_e` features whose first `valid_len` rows
    /// are real tokens.
    pub fn decode_distributions<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        z: &Tensor<T>,
        valid_len: usize,
    ) -> Result<Distributions<T>, DecoderError> {
        if !z.is_matrix() || z.cols() != self.d_e || valid_len > z.rows() {
            return Err(DecoderError::Input(format!("features of shape {:?} with {valid_len} valid rows", z.shape())));
        }
        if !z.all_finite() {
            return Err(NumericsError::NonFinite { op: "decode_distributions" }.into());
        }
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape)?;
        let zv = tape.constant(z.clone())?;
        let (c, a) = self.logits_var(&mut tape, &bp, zv)?;
        let mut cmd = tape.value(c).clone();
        softmax_in_place(cmd.data_mut(), N_CMD);
        let mut args = tape.value(a).clone();
        for row in args.data_mut().chunks_mut(2 * self.v) {
            let (ga, gb) = row.split_at_mut(self.v);
            softmax_in_place(ga, self.v);
            softmax_in_place(gb, self.v);
        }
        Ok(Distributions { cmd, args, valid_len })
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Argmax assembly. The command class picks a structural token or a value
/// token; value tokens take the argmax of each argument group. Position 0
/// is always `cls`; rows beyond `valid_len` are padding. The result may
/// violate the grammar.
pub fn assemble<T: Scalar>(d: &Distributions<T>) -> Result<CadSequence, DecoderError> {
    let n = d.len();
    let v = d.args.cols() / 2;
    if d.cmd.cols() != N_CMD || d.args.rows() != n || d.args.cols() != 2 * v || d.valid_len > n {
        return Err(DecoderError::Input(format!("distribution shapes {:?} / {:?}", d.cmd.shape(), d.args.shape())));
    }
    let mut tokens = vec![TokenPair::PAD; n];
    for (i, tok) in tokens.iter_mut().enumerate().take(d.valid_len) {
        if i == 0 {
            *tok = TokenPair::structural(TokenType::Cls);
            continue;
        }
        let class = TokenType::from_index(argmax(d.cmd.row_slice(i))).expect("command class");
        *tok = match class {
            TokenType::Pad => TokenPair::PAD,
            c if c.is_structural() => TokenPair::structural(c),
            c => {
                let row = d.args.row_slice(i);
                let a = TokenId::new(argmax(&row[..v]) as u16)?;
                let b = match c {
                    TokenType::Coord => TokenId::new(argmax(&row[v..]) as u16)?,
                    _ => TokenId::new(PAD)?,
                };
                TokenPair::new(a, b)
            }
        };
    }
    Ok(CadSequence::from_padded(tokens)?)
}

/// Training targets for a sequence's valid prefix: the command class per
/// token, and the two argument groups (offset into `[0, 2V)` for group `b`)
/// for value tokens only.
pub fn targets(seq: &CadSequence) -> (Vec<Option<usize>>, Vec<Option<usize>>, Vec<Option<usize>>) {
    let n = seq.valid_len;
    let mut cmd = Vec::with_capacity(n);
    let mut ga = Vec::with_capacity(n);
    let mut gb = Vec::with_capacity(n);
    for i in 0..n {
        let ty = seq.token_type(i);
        cmd.push(Some(ty.index()));
        let t = seq.tokens[i];
        if ty.is_structural() {
            ga.push(None);
            gb.push(None);
        } else {
            ga.push(Some(t.a.get() as usize));
            gb.push(Some(t.b.get() as usize));
        }
    }
    (cmd, ga, gb)
}
