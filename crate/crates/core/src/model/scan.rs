//! The GSM-SSD mixing layer on tensors: a tape-recorded path used by the
//! model and a straight-line reference recurrence.

use crate::numerics::{Scalar, Tape, Tensor, Var};

use super::ModelError;

/// Per-token diagonal kernels, each `L × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernels<T> {
    pub a: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
    pub g: Tensor<T>,
}

/// Convolution and mixer weights of one GSM-SSD layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GsmWeights<T> {
    /// `K × d` causal depthwise kernel.
    pub conv: Tensor<T>,
    /// `d × 2d` map producing `(h, z)`.
    pub w_in: Tensor<T>,
    pub b_in: Tensor<T>,
    /// `d × d` map producing `ĥ`.
    pub w_out: Tensor<T>,
    pub b_out: Tensor<T>,
}

/// Tape handles for the kernels of one block.
#[derive(Clone, Copy, Debug)]
pub struct KernelVars {
    pub a: Var,
    pub b: Var,
    pub c: Var,
    pub g: Var,
}

/// Tape handles for a layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct GsmVars {
    pub conv: Var,
    pub w_in: Var,
    pub b_in: Var,
    pub w_out: Var,
    pub b_out: Var,
}

/// Records the layer on `tape` for a valid prefix `z` (`L × d`):
///
/// `Ẑ = dwconv(z) + Π`, `h_in = Ā ⊙ B̄ ⊙ Ẑ`, `(h, z') = Linear(h_in)`,
/// `ĥ = Linear(h ⊙ σ(z'))`, `S_0 = 0`, `S_{k+1} = Ā_k ⊙ S_k + B̄_k ⊙ Ẑ_k`,
/// output `C_k ⊙ S_k + G_k ⊙ ĥ_k`.
pub fn gsm_ssd_layer<T: Scalar>(
    tape: &mut Tape<T>,
    z: Var,
    pi: Option<Var>,
    k: &KernelVars,
    w: &GsmVars,
) -> Result<Var, ModelError> {
    let d = tape.shape(z)[1];
    let conv = tape.dwconv(z, w.conv)?;
    let zhat = match pi {
        Some(p) => tape.add(conv, p)?,
        None => conv,
    };
    let ab = tape.mul(k.a, k.b)?;
    let h_in = tape.mul(ab, zhat)?;
    let hz = tape.linear(h_in, w.w_in, w.b_in)?;
    let h = tape.slice_cols(hz, 0, d)?;
    let zg = tape.slice_cols(hz, d, d)?;
    let gate = tape.sigmoid(zg)?;
    let hg = tape.mul(h, gate)?;
    let hhat = tape.linear(hg, w.w_out, w.b_out)?;
    let u = tape.mul(k.b, zhat)?;
    let s = tape.scan(k.a, u)?;
    let cs = tape.mul(k.c, s)?;
    let gh = tape.mul(k.g, hhat)?;
    Ok(tape.add(cs, gh)?)
}

fn check_aligned<T: Scalar>(z: &Tensor<T>, pi: &Tensor<T>, k: &Kernels<T>, valid_len: usize) -> Result<(), ModelError> {
    let shape = z.shape();
    for (name, t) in [("pi", pi), ("a", &k.a), ("b", &k.b), ("c", &k.c), ("g", &k.g)] {
        if t.shape() != shape {
            return Err(ModelError::Input(format!("{name} has shape {:?}, expected {shape:?}", t.shape())));
        }
    }
    if valid_len > z.rows() {
        return Err(ModelError::Input(format!("valid_len {valid_len} exceeds {} rows", z.rows())));
    }
    Ok(())
}

fn prefix<T: Scalar>(t: &Tensor<T>, n: usize) -> Tensor<T> {
    let d = t.cols();
    Tensor::matrix(n, d, t.data()[..n * d].to_vec()).expect("prefix shape")
}

/// Evaluates the layer over `L × d` inputs whose rows from `valid_len` on
/// are padding: padded positions carry the state through unchanged and
/// output zero.
pub fn gsm_ssd_scan<T: Scalar>(
    z: &Tensor<T>,
    pi: &Tensor<T>,
    kernels: &Kernels<T>,
    w: &GsmWeights<T>,
    valid_len: usize,
) -> Result<Tensor<T>, ModelError> {
    check_aligned(z, pi, kernels, valid_len)?;
    let (l, d) = (z.rows(), z.cols());
    let mut out = Tensor::zeros(&[l, d]);
    if valid_len == 0 {
        return Ok(out);
    }
    let mut tape = Tape::new();
    let n = valid_len;
    let mut c = |t: &Tensor<T>| tape.constant(prefix(t, n));
    let (zv, pv) = (c(z)?, c(pi)?);
    let kv = KernelVars { a: c(&kernels.a)?, b: c(&kernels.b)?, c: c(&kernels.c)?, g: c(&kernels.g)? };
    let wv = GsmVars {
        conv: tape.constant(w.conv.clone())?,
        w_in: tape.constant(w.w_in.clone())?,
        b_in: tape.constant(w.b_in.clone())?,
        w_out: tape.constant(w.w_out.clone())?,
        b_out: tape.constant(w.b_out.clone())?,
    };
    let y = gsm_ssd_layer(&mut tape, zv, Some(pv), &kv, &wv)?;
    out.data_mut()[..n * d].copy_from_slice(tape.value(y).data());
    Ok(out)
}

/// Straight-line evaluation of the same layer, one token and one channel at
/// a time, sharing no code with the tape path.
pub fn gsm_ssd_scan_reference<T: Scalar>(
    z: &Tensor<T>,
    pi: &Tensor<T>,
    kernels: &Kernels<T>,
    w: &GsmWeights<T>,
    valid_len: usize,
) -> Result<Tensor<T>, ModelError> {
    check_aligned(z, pi, kernels, valid_len)?;
    let (l, d) = (z.rows(), z.cols());
    let kw = w.conv.rows();
    let mut out = Tensor::zeros(&[l, d]);
    let mut state = vec![T::zero(); d];
    for k in 0..l {
        if k >= valid_len {
            continue;
        }
        let mut zhat = vec![T::zero(); d];
        for ch in 0..d {
            let mut acc = T::zero();
            for j in 0..kw {
                if j <= k {
                    acc += w.conv.at(j, ch) * z.at(k - j, ch);
                }
            }
            zhat[ch] = acc + pi.at(k, ch);
        }
        let h_in: Vec<T> = (0..d).map(|ch| kernels.a.at(k, ch) * kernels.b.at(k, ch) * zhat[ch]).collect();
        let mut hz = vec![T::zero(); 2 * d];
        for (o, v) in hz.iter_mut().enumerate() {
            let mut acc = w.b_in.data()[o];
            for (i, &x) in h_in.iter().enumerate() {
                acc += x * w.w_in.at(i, o);
            }
            *v = acc;
        }
        let gated: Vec<T> = (0..d).map(|i| hz[i] * (T::one() / (T::one() + (-hz[d + i]).exp()))).collect();
        for ch in 0..d {
            let mut hhat = w.b_out.data()[ch];
            for (i, &x) in gated.iter().enumerate() {
                hhat += x * w.w_out.at(i, ch);
            }
            let y = kernels.c.at(k, ch) * state[ch] + kernels.g.at(k, ch) * hhat;
            out.data_mut()[k * d + ch] = y;
        }
        for ch in 0..d {
            state[ch] = kernels.a.at(k, ch) * state[ch] + kernels.b.at(k, ch) * zhat[ch];
        }
    }
    Ok(out)
}
