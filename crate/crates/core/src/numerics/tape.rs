//! Reverse-mode differentiation over a dynamically recorded tape.
//!
//! Every op records its output value and inputs; [`Tape::backward`] walks
//! the record in reverse and accumulates gradients for every node that
//! depends on a leaf created with `requires_grad`.

use super::scalar::{matmul_into, Scalar};
use super::tensor::Tensor;
use super::NumericsError;

/// Offset keeping squashed transitions strictly below one.
pub const SQUASH_EPS: f64 = 1e-4;

/// Added to the mean square in RMS normalization.
pub const RMS_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Affine(Var, T),
    Sigmoid(Var),
    Silu(Var),
    Softplus(Var),
    Exp(Var),
    Squash(Var),
    SoftmaxRows(Var),
    RmsNorm { x: Var, gain: Var, inv: Vec<T> },
    DwConv(Var, Var),
    Gather { table: Var, idx: Vec<usize> },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    Scan { a: Var, x: Var },
    Mse(Var, Var),
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<T> },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` loss with respect to `v`, if `v`
    /// participated in it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    fn check_finite(t: &Tensor<T>, op: &'static str) -> Result<(), NumericsError> {
        if t.all_finite() {
            Ok(())
        } else {
            Err(NumericsError::NonFinite { op })
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str, inputs: &[Var]) -> Result<Var, NumericsError> {
        Self::check_finite(&value, name)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a leaf; gradients flow to it when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var, NumericsError> {
        Self::check_finite(&value, "leaf")?;
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var, NumericsError> {
        self.leaf(value, false)
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> NumericsError {
        NumericsError::Shape { op, left: self.shape(a).to_vec(), right: self.shape(b).to_vec() }
    }

    fn require_matrix(&self, op: &'static str, a: Var) -> Result<(usize, usize), NumericsError> {
        let t = self.value(a);
        if !t.is_matrix() {
            return Err(NumericsError::Shape { op, left: t.shape().to_vec(), right: vec![] });
        }
        Ok((t.rows(), t.cols()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows() {
            return Err(self.shape_err("matmul", a, b));
        }
        let out = ta.matmul(tb)?;
        self.push(out, Op::MatMul(a, b), "matmul", &[a, b])
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(self.shape_err(name, a, b));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape(), data)?;
        self.push(out, op, name, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(
        &mut self,
        a: Var,
        r: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, NumericsError> {
        let (_, n) = self.require_matrix(name, a)?;
        let tr = self.value(r);
        if tr.numel() != n || tr.rows() != 1 {
            return Err(self.shape_err(name, a, r));
        }
        let row = tr.data().to_vec();
        let ta = self.value(a);
        let data = ta.data().chunks(n.max(1)).flat_map(|c| c.iter().zip(&row).map(|(&x, &y)| f(x, y))).collect();
        let out = Tensor::new(ta.shape(), data)?;
        self.push(out, op, name, &[a, r])
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var, NumericsError> {
        self.row_broadcast(a, r, "add_row", |x, y| x + y, Op::AddRow(a, r))
    }

    /// Multiplies every row of an `m×n` matrix by a `1×n` row.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Result<Var, NumericsError> {
        self.row_broadcast(a, r, "mul_row", |x, y| x * y, Op::MulRow(a, r))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var, NumericsError> {
        let (s, b) = (T::of(scale), T::of(shift));
        let out = self.value(a).map(|x| s * x + b);
        self.push(out, Op::Affine(a, s), "affine", &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, NumericsError> {
        self.affine(a, s, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid", &[a])
    }

    /// `x · sigmoid(x)`.
    pub fn silu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x * sigmoid(x));
        self.push(out, Op::Silu(a), "silu", &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a), "softplus", &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).map(|x| x.exp());
        self.push(out, Op::Exp(a), "exp", &[a])
    }

    /// `exp(−softplus(x) − ε)`, strictly inside `(0, 1)`.
    pub fn squash(&mut self, a: Var) -> Result<Var, NumericsError> {
        let eps = T::of(SQUASH_EPS);
        let out = self.value(a).map(|x| (-(softplus(x) + eps)).exp());
        self.push(out, Op::Squash(a), "squash", &[a])
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let ta = self.value(a);
        let mut data = ta.data().to_vec();
        softmax_in_place(&mut data, ta.cols());
        let out = Tensor::new(ta.shape(), data)?;
        self.push(out, Op::SoftmaxRows(a), "softmax", &[a])
    }

    /// Row-wise RMS normalization followed by a `1×n` gain.
    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.require_matrix("rms_norm", x)?;
        let tg = self.value(gain);
        if tg.numel() != n {
            return Err(self.shape_err("rms_norm", x, gain));
        }
        let g = tg.data().to_vec();
        let tx = self.value(x);
        let eps = T::of(RMS_EPS);
        let mut inv = Vec::with_capacity(m);
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = tx.row_slice(r);
            let ms = row.iter().map(|&v| v * v).sum::<T>() / T::of(n as f64);
            let s = T::one() / (ms + eps).sqrt();
            inv.push(s);
            data.extend(row.iter().zip(&g).map(|(&v, &gg)| v * s * gg));
        }
        let out = Tensor::new(tx.shape(), data)?;
        self.push(out, Op::RmsNorm { x, gain, inv }, "rms_norm", &[x, gain])
    }

    /// Causal depthwise convolution along rows: `y[k] = Σ_j w[j] ⊙ x[k−j]`
    /// with `w` of shape `K×n` and rows before the start treated as zero.
    pub fn dwconv(&mut self, x: Var, w: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.require_matrix("dwconv", x)?;
        let (k, wn) = self.require_matrix("dwconv", w)?;
        if wn != n {
            return Err(self.shape_err("dwconv", x, w));
        }
        let (tx, tw) = (self.value(x).data(), self.value(w).data());
        let mut data = vec![T::zero(); m * n];
        for r in 0..m {
            for j in 0..k.min(r + 1) {
                let src = &tx[(r - j) * n..(r - j + 1) * n];
                let wr = &tw[j * n..(j + 1) * n];
                for ((o, &xv), &wv) in data[r * n..(r + 1) * n].iter_mut().zip(src).zip(wr) {
                    *o += xv * wv;
                }
            }
        }
        let out = Tensor::matrix(m, n, data)?;
        self.push(out, Op::DwConv(x, w), "dwconv", &[x, w])
    }

    /// Rows of `table` selected by `idx`.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let (rows, n) = self.require_matrix("gather", table)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(NumericsError::Invalid(format!("gather index {bad} out of range for {rows} rows")));
        }
        let t = self.value(table);
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::matrix(idx.len(), n, data)?;
        self.push(out, Op::Gather { table, idx: idx.to_vec() }, "gather", &[table])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts.first().ok_or_else(|| NumericsError::Invalid("concat of nothing".into()))?;
        let (m, _) = self.require_matrix("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.require_matrix("concat_cols", p)?;
            if pm != m {
                return Err(self.shape_err("concat_cols", first, p));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::matrix(m, total, data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols", parts)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let (m, n) = self.require_matrix("slice_cols", x)?;
        if start + len > n {
            return Err(NumericsError::Shape { op: "slice_cols", left: vec![m, n], right: vec![start, start + len] });
        }
        let t = self.value(x);
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        let out = Tensor::matrix(m, len, data)?;
        self.push(out, Op::SliceCols { x, start }, "slice_cols", &[x])
    }

    /// Diagonal linear recurrence: `S[0] = 0`, `S[k] = a[k−1] ⊙ S[k−1] + x[k−1]`.
    pub fn scan(&mut self, a: Var, x: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.require_matrix("scan", a)?;
        if self.shape(x) != [m, n] {
            return Err(self.shape_err("scan", a, x));
        }
        let (ta, tx) = (self.value(a).data(), self.value(x).data());
        let mut data = vec![T::zero(); m * n];
        for k in 1..m {
            let (prev, cur) = data.split_at_mut(k * n);
            let prev = &prev[(k - 1) * n..];
            for c in 0..n {
                cur[c] = ta[(k - 1) * n + c] * prev[c] + tx[(k - 1) * n + c];
            }
        }
        let out = Tensor::matrix(m, n, data)?;
        self.push(out, Op::Scan { a, x }, "scan", &[a, x])
    }

    /// Mean squared difference over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(self.shape_err("mse", a, b));
        }
        let n = ta.numel().max(1);
        let s: T = ta.data().iter().zip(tb.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let out = Tensor::scalar(s / T::of(n as f64));
        self.push(out, Op::Mse(a, b), "mse", &[a, b])
    }

    /// Mean softmax cross-entropy over the rows that have a target.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var, NumericsError> {
        let (m, n) = self.require_matrix("cross_entropy", logits)?;
        if targets.len() != m {
            return Err(NumericsError::Shape { op: "cross_entropy", left: vec![m, n], right: vec![targets.len()] });
        }
        if let Some(&Some(bad)) = targets.iter().find(|t| t.is_some_and(|c| c >= n)) {
            return Err(NumericsError::Invalid(format!("target class {bad} out of range for {n} classes")));
        }
        let mut probs = self.value(logits).data().to_vec();
        softmax_in_place(&mut probs, n);
        let count = targets.iter().filter(|t| t.is_some()).count();
        let mut loss = T::zero();
        for (r, t) in targets.iter().enumerate() {
            if let Some(c) = *t {
                loss -= probs[r * n + c].max(T::min_positive_value()).ln();
            }
        }
        let out = Tensor::scalar(if count == 0 { T::zero() } else { loss / T::of(count as f64) });
        self.push(out, Op::CrossEntropy { logits, targets: targets.to_vec(), probs }, "cross_entropy", &[logits])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), "sum", &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / T::of(t.numel().max(1) as f64));
        self.push(out, Op::Mean(a), "mean", &[a])
    }

    /// `x · W + b` for `x: m×i`, `W: i×o`, `b: 1×o`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagates from a scalar `loss`, replacing any earlier gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(NumericsError::NotScalar(lt.shape().to_vec()));
        }
        let seed = Tensor::full(lt.shape(), T::one());
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.accumulate(loss, seed);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if !matches!(self.nodes[i].op, Op::Leaf) {
                self.backprop_node(i, &g)?;
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, g: &Tensor<T>) -> Result<(), NumericsError> {
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        let result = self.backprop_op(i, &op, g);
        self.nodes[i].op = op;
        result
    }

    fn val(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backprop_op(&mut self, i: usize, op: &Op<T>, g: &Tensor<T>) -> Result<(), NumericsError> {
        let gd = g.data();
        let like = |t: &Tensor<T>, data: Vec<T>| Tensor::new(t.shape(), data).expect("same shape");
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(a), self.val(b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.wants(a) {
                    let mut ga = vec![T::zero(); m * k];
                    matmul_into(m, n, k, gd, false, tb.data(), true, &mut ga, false);
                    let ga = like(ta, ga);
                    self.accumulate(a, ga);
                }
                let (ta, tb) = (self.val(a), self.val(b));
                if self.wants(b) {
                    let mut gb = vec![T::zero(); k * n];
                    matmul_into(k, m, n, ta.data(), true, gd, false, &mut gb, false);
                    let gb = like(tb, gb);
                    self.accumulate(b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let ga = like(g, gd.iter().zip(self.val(b).data()).map(|(&x, &y)| x * y).collect());
                let gb = like(g, gd.iter().zip(self.val(a).data()).map(|(&x, &y)| x * y).collect());
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::AddRow(a, r) => {
                let n = g.cols();
                let mut gr = vec![T::zero(); n];
                for row in gd.chunks(n) {
                    for (s, &v) in gr.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                let gr = like(self.val(r), gr);
                self.accumulate(a, g.clone());
                self.accumulate(r, gr);
            }
            Op::MulRow(a, r) => {
                let n = g.cols();
                let (ta, tr) = (self.val(a).data(), self.val(r).data());
                let mut gr = vec![T::zero(); n];
                let mut ga = Vec::with_capacity(gd.len());
                for (grow, arow) in gd.chunks(n).zip(ta.chunks(n)) {
                    for c in 0..n {
                        gr[c] += grow[c] * arow[c];
                        ga.push(grow[c] * tr[c]);
                    }
                }
                let (ga, gr) = (like(g, ga), like(self.val(r), gr));
                self.accumulate(a, ga);
                self.accumulate(r, gr);
            }
            Op::Affine(a, s) => self.accumulate(a, g.map(|x| x * s)),
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                let ga = like(g, gd.iter().zip(y.data()).map(|(&gv, &yv)| gv * yv * (T::one() - yv)).collect());
                self.accumulate(a, ga);
            }
            Op::Silu(a) => {
                let x = self.val(a);
                let ga = like(
                    g,
                    gd.iter()
                        .zip(x.data())
                        .map(|(&gv, &xv)| {
                            let s = sigmoid(xv);
                            gv * (s + xv * s * (T::one() - s))
                        })
                        .collect(),
                );
                self.accumulate(a, ga);
            }
            Op::Softplus(a) => {
                let x = self.val(a);
                let ga = like(g, gd.iter().zip(x.data()).map(|(&gv, &xv)| gv * sigmoid(xv)).collect());
                self.accumulate(a, ga);
            }
            Op::Exp(a) => {
                let y = &self.nodes[i].value;
                let ga = like(g, gd.iter().zip(y.data()).map(|(&gv, &yv)| gv * yv).collect());
                self.accumulate(a, ga);
            }
            Op::Squash(a) => {
                let (x, y) = (self.val(a), &self.nodes[i].value);
                let ga = like(
                    g,
                    gd.iter().zip(x.data()).zip(y.data()).map(|((&gv, &xv), &yv)| -gv * yv * sigmoid(xv)).collect(),
                );
                self.accumulate(a, ga);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let n = y.cols();
                let mut ga = Vec::with_capacity(gd.len());
                for (grow, yrow) in gd.chunks(n).zip(y.data().chunks(n)) {
                    let dot: T = grow.iter().zip(yrow).map(|(&p, &q)| p * q).sum();
                    ga.extend(grow.iter().zip(yrow).map(|(&gv, &yv)| yv * (gv - dot)));
                }
                let ga = like(g, ga);
                self.accumulate(a, ga);
            }
            Op::RmsNorm { x, gain, ref inv } => {
                let (tx, tg) = (self.val(x), self.val(gain));
                let n = tx.cols();
                let nf = T::of(n as f64);
                let gn = tg.data();
                let mut gx = Vec::with_capacity(gd.len());
                let mut gg = vec![T::zero(); n];
                for (r, (grow, xrow)) in gd.chunks(n).zip(tx.data().chunks(n)).enumerate() {
                    let s = inv[r];
                    let mut dot = T::zero();
                    for c in 0..n {
                        let xh = xrow[c] * s;
                        gg[c] += grow[c] * xh;
                        dot += grow[c] * gn[c] * xh;
                    }
                    let mean = dot / nf;
                    gx.extend((0..n).map(|c| s * (grow[c] * gn[c] - xrow[c] * s * mean)));
                }
                let (gx, gg) = (like(tx, gx), like(tg, gg));
                self.accumulate(x, gx);
                self.accumulate(gain, gg);
            }
            Op::DwConv(x, w) => {
                let (tx, tw) = (self.val(x), self.val(w));
                let (m, n, k) = (tx.rows(), tx.cols(), tw.rows());
                let (xd, wd) = (tx.data(), tw.data());
                let mut gx = vec![T::zero(); m * n];
                let mut gw = vec![T::zero(); k * n];
                for r in 0..m {
                    for j in 0..k.min(r + 1) {
                        for c in 0..n {
                            let gv = gd[r * n + c];
                            gx[(r - j) * n + c] += wd[j * n + c] * gv;
                            gw[j * n + c] += xd[(r - j) * n + c] * gv;
                        }
                    }
                }
                let (gx, gw) = (like(tx, gx), like(tw, gw));
                self.accumulate(x, gx);
                self.accumulate(w, gw);
            }
            Op::Gather { table, ref idx } => {
                if self.wants(table) {
                    let t = self.val(table);
                    let n = t.cols();
                    let mut gt = Tensor::zeros(t.shape());
                    let gtd = gt.data_mut();
                    for (r, &row) in idx.iter().enumerate() {
                        for c in 0..n {
                            gtd[row * n + c] += gd[r * n + c];
                        }
                    }
                    self.accumulate(table, gt);
                }
            }
            Op::ConcatCols(ref parts) => {
                let m = g.rows();
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let w = self.val(p).cols();
                    let mut gp = Vec::with_capacity(m * w);
                    for r in 0..m {
                        gp.extend_from_slice(&gd[r * total + off..r * total + off + w]);
                    }
                    off += w;
                    let gp = like(self.val(p), gp);
                    self.accumulate(p, gp);
                }
            }
            Op::SliceCols { x, start } => {
                let tx = self.val(x);
                let (m, n) = (tx.rows(), tx.cols());
                let w = g.cols();
                let mut gx = vec![T::zero(); m * n];
                for r in 0..m {
                    gx[r * n + start..r * n + start + w].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                let gx = like(tx, gx);
                self.accumulate(x, gx);
            }
            Op::Scan { a, x } => {
                let s = &self.nodes[i].value;
                let (m, n) = (s.rows(), s.cols());
                let (ad, sd) = (self.val(a).data(), s.data());
                let mut ga = vec![T::zero(); m * n];
                let mut gx = vec![T::zero(); m * n];
                let mut carry = vec![T::zero(); n];
                for k in (1..m).rev() {
                    for c in 0..n {
                        let total = gd[k * n + c] + carry[c];
                        ga[(k - 1) * n + c] = total * sd[(k - 1) * n + c];
                        gx[(k - 1) * n + c] = total;
                        carry[c] = ad[(k - 1) * n + c] * total;
                    }
                }
                let (ga, gx) = (like(s, ga), like(s, gx));
                self.accumulate(a, ga);
                self.accumulate(x, gx);
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (self.val(a), self.val(b));
                let k = T::of(2.0 / ta.numel().max(1) as f64) * gd[0];
                let diff: Vec<T> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| k * (x - y)).collect();
                let ga = like(ta, diff);
                let gb = ga.map(|v| -v);
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::CrossEntropy { logits, ref targets, ref probs } => {
                let t = self.val(logits);
                let n = t.cols();
                let count = targets.iter().filter(|t| t.is_some()).count();
                let mut gl = vec![T::zero(); probs.len()];
                if count > 0 {
                    let k = gd[0] / T::of(count as f64);
                    for (r, tg) in targets.iter().enumerate() {
                        if let Some(c) = *tg {
                            for j in 0..n {
                                gl[r * n + j] = k * probs[r * n + j];
                            }
                            gl[r * n + c] -= k;
                        }
                    }
                }
                let gl = like(t, gl);
                self.accumulate(logits, gl);
            }
            Op::Sum(a) => {
                let ga = Tensor::full(self.val(a).shape(), gd[0]);
                self.accumulate(a, ga);
            }
            Op::Mean(a) => {
                let t = self.val(a);
                let ga = Tensor::full(t.shape(), gd[0] / T::of(t.numel().max(1) as f64));
                self.accumulate(a, ga);
            }
        }
        Ok(())
    }
}

/// Numerically stable in-place softmax over consecutive rows of width `n`.
pub fn softmax_in_place<T: Scalar>(data: &mut [T], n: usize) {
    if n == 0 {
        return;
    }
    for row in data.chunks_mut(n) {
        let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Central-difference check of `build` with respect to every entry of
    /// every input.
    fn gradcheck(inputs: Vec<Tensor<f64>>, build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true).unwrap()).collect();
        let loss = build(&mut tape, &vars);
        tape.backward(loss).unwrap();
        let analytic: Vec<Tensor<f64>> = vars
            .iter()
            .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.shape(v))))
            .collect();
        let eval = |ins: &[Tensor<f64>]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ins.iter().map(|x| t.leaf(x.clone(), true).unwrap()).collect();
            let l = build(&mut t, &vs);
            t.value(l).item()
        };
        let h = 1e-5;
        for (p, input) in inputs.iter().enumerate() {
            for e in 0..input.numel() {
                let mut plus = inputs.clone();
                plus[p].data_mut()[e] += h;
                let mut minus = inputs.clone();
                minus[p].data_mut()[e] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = analytic[p].data()[e];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(rel < 1e-5, "input {p} entry {e}: analytic {an} vs numeric {fd}");
            }
        }
    }

    fn weighted_sum(t: &mut Tape<f64>, y: Var, seed: u64) -> Var {
        // a random linear functional keeps gradients non-uniform
        let w = Tensor::randn(t.shape(y), 1.0, &mut rng(seed));
        let w = t.constant(w).unwrap();
        let p = t.mul(y, w).unwrap();
        t.sum(p).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut t = Tape::<f64>::new();
        let w = t.leaf(Tensor::randn(&[3, 2], 1.0, &mut rng(1)), true).unwrap();
        let s = t.sum(w).unwrap();
        t.backward(s).unwrap();
        assert!(t.grad(w).unwrap().data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn backward_requires_a_scalar() {
        let mut t = Tape::<f64>::new();
        let w = t.leaf(Tensor::zeros(&[2, 2]), true).unwrap();
        assert!(matches!(t.backward(w), Err(NumericsError::NotScalar(_))));
    }

    #[test]
    fn mse_gradient_matches_closed_form() {
        let wv = Tensor::<f64>::matrix(2, 2, vec![1.0, 2.0, -0.5, 0.25]).unwrap();
        let xv = Tensor::<f64>::matrix(2, 1, vec![0.3, -1.2]).unwrap();
        let yv = Tensor::<f64>::matrix(2, 1, vec![0.7, 0.1]).unwrap();
        let mut t = Tape::new();
        let w = t.leaf(wv.clone(), true).unwrap();
        let x = t.constant(xv.clone()).unwrap();
        let y = t.constant(yv.clone()).unwrap();
        let p = t.matmul(w, x).unwrap();
        let l = t.mse(p, y).unwrap();
        t.backward(l).unwrap();
        // d/dW mean((Wx−y)²) = 2 (Wx−y) xᵀ / n
        let r = wv.matmul(&xv).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = 2.0 * (r.at(i, 0) - yv.at(i, 0)) * xv.at(j, 0) / 2.0;
                assert!((t.grad(w).unwrap().at(i, j) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn softmax_of_zero_row_is_uniform() {
        let mut t = Tape::<f64>::new();
        let z = t.constant(Tensor::zeros(&[2, 5])).unwrap();
        let s = t.softmax_rows(z).unwrap();
        assert!(t.value(s).data().iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn rms_norm_rows_have_unit_rms() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::randn(&[4, 7], 3.0, &mut rng(2))).unwrap();
        let g = t.constant(Tensor::full(&[1, 7], 1.0)).unwrap();
        let y = t.rms_norm(x, g).unwrap();
        for r in 0..4 {
            let row = t.value(y).row_slice(r);
            let rms = (row.iter().map(|v| v * v).sum::<f64>() / 7.0).sqrt();
            assert!((rms - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn unit_kernel_conv_is_identity() {
        let mut t = Tape::<f64>::new();
        let xv = Tensor::randn(&[5, 3], 1.0, &mut rng(3));
        let x = t.constant(xv.clone()).unwrap();
        let w = t.constant(Tensor::full(&[1, 3], 1.0)).unwrap();
        let y = t.dwconv(x, w).unwrap();
        assert_eq!(t.value(y), &xv);
    }

    #[test]
    fn conv_is_causal() {
        let mut t = Tape::<f64>::new();
        let mut xv = Tensor::randn(&[6, 2], 1.0, &mut rng(4));
        let w = Tensor::randn(&[3, 2], 1.0, &mut rng(5));
        let (x, wv) = (t.constant(xv.clone()).unwrap(), t.constant(w.clone()).unwrap());
        let y0 = t.dwconv(x, wv).unwrap();
        xv.data_mut()[4 * 2] += 1.0;
        let (x2, wv2) = (t.constant(xv).unwrap(), t.constant(w).unwrap());
        let y1 = t.dwconv(x2, wv2).unwrap();
        assert_eq!(t.value(y0).data()[..8], t.value(y1).data()[..8]);
        assert_ne!(t.value(y0).data()[8], t.value(y1).data()[8]);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut t = Tape::<f64>::new();
        assert!(t.constant(Tensor::row(vec![f64::NAN])).is_err());
        let big = t.constant(Tensor::row(vec![1000.0])).unwrap();
        assert!(matches!(t.exp(big), Err(NumericsError::NonFinite { op: "exp" })));
    }

    #[test]
    fn squash_stays_below_one() {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::row(vec![-1e4, -30.0, 0.0, 30.0])).unwrap();
        let y = t.squash(x).unwrap();
        assert!(t.value(y).data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn gradcheck_dense_ops() {
        let mut r = rng(10);
        let ins = vec![Tensor::randn(&[3, 4], 1.0, &mut r), Tensor::randn(&[4, 2], 1.0, &mut r), Tensor::randn(&[1, 2], 1.0, &mut r)];
        gradcheck(ins, |t, v| {
            let y = t.linear(v[0], v[1], v[2]).unwrap();
            weighted_sum(t, y, 11)
        });
        let ins = vec![Tensor::randn(&[3, 4], 1.0, &mut r), Tensor::randn(&[3, 4], 1.0, &mut r), Tensor::randn(&[1, 4], 1.0, &mut r)];
        gradcheck(ins, |t, v| {
            let a = t.mul(v[0], v[1]).unwrap();
            let b = t.sub(a, v[1]).unwrap();
            let c = t.mul_row(b, v[2]).unwrap();
            let d = t.affine(c, 0.7, 0.1).unwrap();
            let e = t.add(d, v[0]).unwrap();
            weighted_sum(t, e, 12)
        });
    }

    #[test]
    fn gradcheck_pointwise_ops() {
        let mut r = rng(20);
        let ins = vec![Tensor::randn(&[3, 5], 2.0, &mut r)];
        gradcheck(ins.clone(), |t, v| {
            let a = t.sigmoid(v[0]).unwrap();
            weighted_sum(t, a, 1)
        });
        gradcheck(ins.clone(), |t, v| {
            let a = t.silu(v[0]).unwrap();
            weighted_sum(t, a, 2)
        });
        gradcheck(ins.clone(), |t, v| {
            let a = t.softplus(v[0]).unwrap();
            weighted_sum(t, a, 3)
        });
        gradcheck(ins.clone(), |t, v| {
            let a = t.squash(v[0]).unwrap();
            weighted_sum(t, a, 4)
        });
        gradcheck(ins.clone(), |t, v| {
            let a = t.exp(v[0]).unwrap();
            let b = t.mean(a).unwrap();
            t.scale(b, 2.0).unwrap()
        });
        gradcheck(ins, |t, v| {
            let a = t.softmax_rows(v[0]).unwrap();
            weighted_sum(t, a, 5)
        });
    }

    #[test]
    fn gradcheck_structured_ops() {
        let mut r = rng(30);
        let ins = vec![Tensor::randn(&[5, 4], 1.0, &mut r), Tensor::randn(&[1, 4], 1.0, &mut r)];
        gradcheck(ins, |t, v| {
            let a = t.rms_norm(v[0], v[1]).unwrap();
            weighted_sum(t, a, 1)
        });
        let ins = vec![Tensor::randn(&[6, 3], 1.0, &mut r), Tensor::randn(&[4, 3], 1.0, &mut r)];
        gradcheck(ins, |t, v| {
            let a = t.dwconv(v[0], v[1]).unwrap();
            weighted_sum(t, a, 2)
        });
        let ins = vec![Tensor::randn(&[5, 3], 1.0, &mut r)];
        gradcheck(ins, |t, v| {
            let a = t.gather(v[0], &[4, 0, 4, 2]).unwrap();
            weighted_sum(t, a, 3)
        });
        let ins = vec![Tensor::randn(&[3, 2], 1.0, &mut r), Tensor::randn(&[3, 3], 1.0, &mut r)];
        gradcheck(ins, |t, v| {
            let a = t.concat_cols(&[v[0], v[1], v[0]]).unwrap();
            let b = t.slice_cols(a, 1, 5).unwrap();
            weighted_sum(t, b, 4)
        });
        let ins = vec![Tensor::<f64>::randn(&[7, 3], 1.0, &mut r).map(|x| 0.5 * x.tanh()), Tensor::randn(&[7, 3], 1.0, &mut r)];
        gradcheck(ins, |t, v| {
            let a = t.scan(v[0], v[1]).unwrap();
            weighted_sum(t, a, 5)
        });
    }

    #[test]
    fn gradcheck_losses() {
        let mut r = rng(40);
        let ins = vec![Tensor::randn(&[4, 6], 1.0, &mut r)];
        gradcheck(ins, |t, v| t.cross_entropy(v[0], &[Some(1), None, Some(5), Some(0)]).unwrap());
        let ins = vec![Tensor::randn(&[3, 2], 1.0, &mut r), Tensor::randn(&[3, 2], 1.0, &mut r)];
        gradcheck(ins, |t, v| t.mse(v[0], v[1]).unwrap());
    }

    #[test]
    fn scan_matches_loop() {
        let mut t = Tape::<f64>::new();
        let av = Tensor::randn(&[5, 2], 0.3, &mut rng(50));
        let xv = Tensor::randn(&[5, 2], 1.0, &mut rng(51));
        let (a, x) = (t.constant(av.clone()).unwrap(), t.constant(xv.clone()).unwrap());
        let s = t.scan(a, x).unwrap();
        let mut st = [0.0; 2];
        for k in 0..5 {
            for c in 0..2 {
                assert_eq!(t.value(s).at(k, c), st[c]);
            }
            for c in 0..2 {
                st[c] = av.at(k, c) * st[c] + xv.at(k, c);
            }
        }
    }
}
