//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every op appends a node holding its output value; inputs always precede
//! their consumers, so walking the node list backwards is an exact reverse
//! of execution order. Leaves may borrow their values, which lets a forward
//! pass reference model parameters without copying them.

use std::borrow::Cow;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, gemm_nn, gemm_nt, gemm_tn};
use crate::numerics::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, F),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Gelu(Var),
    Dropout(Var, Vec<F>),
    Block {
        src: Var,
        row0: usize,
        col0: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SmoothedCrossEntropy {
        logits: Var,
        probs: Vec<F>,
        targets: Vec<F>,
    },
    Sum(Var),
}

struct Node<'a, F: Scalar> {
    value: Cow<'a, Tensor<F>>,
    op: Op<F>,
    requires_grad: bool,
}

/// Operation record for one forward pass. Single owner; not shared across threads.
pub struct Tape<'a, F: Scalar> {
    nodes: Vec<Node<'a, F>>,
}

impl<F: Scalar> Default for Tape<'_, F> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// Target distribution `(1-eps)·onehot + eps/C` and the mean smoothed cross-entropy.
pub(crate) fn smoothed_cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    labels: &[usize],
    epsilon: F,
) -> Result<(F, Vec<F>, Vec<F>)> {
    let (b, c) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(shape_err("cross_entropy", logits.shape(), &[labels.len()]));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Parameter(format!("label {bad} out of range for {c} classes")));
    }
    let off = epsilon / F::of(c as f64);
    let on = F::one() - epsilon + off;
    let mut probs = logits.data().to_vec();
    let mut targets = vec![off; b * c];
    let mut total = F::zero();
    for (r, &label) in labels.iter().enumerate() {
        let row = &mut probs[r * c..(r + 1) * c];
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = row.iter().map(|&z| (z - max).exp()).sum::<F>().ln() + max;
        targets[r * c + label] = on;
        for (j, z) in row.iter_mut().enumerate() {
            let log_p = *z - lse;
            total -= targets[r * c + j] * log_p;
            *z = log_p.exp();
        }
    }
    Ok((total / F::of(b as f64), probs, targets))
}

impl<'a, F: Scalar> Tape<'a, F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor<F>>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor<F>, op: Op<F>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    /// Trainable leaf borrowing its value.
    pub fn param(&mut self, value: &'a Tensor<F>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn param_owned(&mut self, value: Tensor<F>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor<F>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.derived(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul_nt(self.value(a), self.value(b))?;
        Ok(self.derived(out, Op::MatMulNt(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.len() != y.len() || x.cols() != y.cols() {
            return Err(shape_err("add", x.shape(), y.shape()));
        }
        let mut out = x.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(y.data()) {
            *o += v;
        }
        Ok(self.derived(out, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("mul", x.shape(), y.shape()));
        }
        let mut out = x.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(y.data()) {
            *o *= v;
        }
        Ok(self.derived(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.len() != x.cols() {
            return Err(shape_err("add_row", x.shape(), r.shape()));
        }
        let mut out = x.clone();
        let c = out.cols();
        for chunk in out.data_mut().chunks_mut(c) {
            for (o, &b) in chunk.iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        Ok(self.derived(out, Op::AddRow(a, row), &[a, row]))
    }

    /// `x · W + b` for `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, weight)?;
        self.add_row(xw, bias)
    }

    pub fn scale(&mut self, a: Var, factor: F) -> Var {
        let out = self.value(a).map(|v| v * factor);
        self.derived(out, Op::Scale(a, factor), &[a])
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = kernels::softmax(self.value(a));
        self.derived(out, Op::Softmax(a), &[a])
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let (out, cache) = kernels::layer_norm_forward(self.value(x), self.value(gain), self.value(bias), eps)?;
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat: cache.xhat,
            rstd: cache.rstd,
        };
        Ok(self.derived(out, op, &[x, gain, bias]))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = kernels::gelu(self.value(a));
        self.derived(out, Op::Gelu(a), &[a])
    }

    /// Inverted dropout; returns `a` itself when inactive.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R, training: bool) -> Result<Var> {
        kernels::check_dropout_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let mask: Vec<F> = kernels::dropout_mask(self.value(a).len(), rate, rng);
        let mut out = self.value(a).clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        Ok(self.derived(out, Op::Dropout(a, mask), &[a]))
    }

    /// Rectangular sub-matrix `[row0..row0+rows, col0..col0+cols]`.
    pub fn block(&mut self, src: Var, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<Var> {
        let x = self.value(src);
        let (r, c) = (x.rows(), x.cols());
        if rows == 0 || cols == 0 || row0 + rows > r || col0 + cols > c {
            return Err(shape_err("block", x.shape(), &[row0, rows, col0, cols]));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in row0..row0 + rows {
            data.extend_from_slice(&x.row(i)[col0..col0 + cols]);
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.derived(out, Op::Block { src, row0, col0 }, &[src]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("concat of zero parts".into()))?;
        let rows = self.value(*first).rows();
        let mut width = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first).shape(), v.shape()));
            }
            width += v.cols();
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, width], data)?;
        Ok(self.derived(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("concat of zero parts".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_err("concat_rows", self.value(*first).shape(), v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        let rows = data.len() / cols;
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.derived(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather_rows(&mut self, src: Var, indices: &[usize]) -> Result<Var> {
        let x = self.value(src);
        if indices.is_empty() || indices.iter().any(|&i| i >= x.rows()) {
            return Err(shape_err("gather_rows", x.shape(), indices));
        }
        let mut data = Vec::with_capacity(indices.len() * x.cols());
        for &i in indices {
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::new(vec![indices.len(), x.cols()], data)?;
        Ok(self.derived(out, Op::GatherRows(src, indices.to_vec()), &[src]))
    }

    /// Mean label-smoothed cross-entropy of `logits: [B, C]`.
    pub fn smoothed_cross_entropy(&mut self, logits: Var, labels: &[usize], epsilon: F) -> Result<Var> {
        let (loss, probs, targets) = smoothed_cross_entropy(self.value(logits), labels, epsilon)?;
        let op = Op::SmoothedCrossEntropy { logits, probs, targets };
        Ok(self.derived(Tensor::scalar(loss), op, &[logits]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.derived(out, Op::Sum(a), &[a])
    }

    /// Reverse sweep from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients<F>> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(shape_err("backward", root_value.shape(), &[1]));
        }
        let mut grads: Vec<Option<Tensor<F>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Tensor::ones(root_value.shape()));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            self.propagate(&node.op, &node.value, g, lower);
        }
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor<F>>], v: Var) -> Option<&'g mut Tensor<F>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let shape = self.value(v).shape();
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)))
    }

    fn propagate(&self, op: &Op<F>, out: &Tensor<F>, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if let Some(ga) = self.slot(grads, *a) {
                    gemm_nt(g.data(), bv.data(), ga.data_mut(), m, n, k);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gemm_tn(av.data(), g.data(), gb.data_mut(), m, k, n);
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if let Some(ga) = self.slot(grads, *a) {
                    gemm_nn(g.data(), bv.data(), ga.data_mut(), m, n, k);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gemm_tn(g.data(), av.data(), gb.data_mut(), m, n, k);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = self.slot(grads, *v) {
                        for (d, &s) in gv.data_mut().iter_mut().zip(g.data()) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    let ov = self.value(*other);
                    if let Some(gv) = self.slot(grads, *v) {
                        for ((d, &s), &o) in gv.data_mut().iter_mut().zip(g.data()).zip(ov.data()) {
                            *d += s * o;
                        }
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gr) = self.slot(grads, *row) {
                    let c = g.cols();
                    for chunk in g.data().chunks(c) {
                        for (d, &s) in gr.data_mut().iter_mut().zip(chunk) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Scale(a, factor) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (d, &s) in ga.data_mut().iter_mut().zip(g.data()) {
                        *d += *factor * s;
                    }
                }
            }
            Op::Softmax(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let c = out.cols();
                    for ((yr, gr), dr) in out
                        .data()
                        .chunks(c)
                        .zip(g.data().chunks(c))
                        .zip(ga.data_mut().chunks_mut(c))
                    {
                        let inner: F = yr.iter().zip(gr).map(|(&y, &gg)| y * gg).sum();
                        for j in 0..c {
                            dr[j] += yr[j] * (gr[j] - inner);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = out.cols();
                let gain_v = self.value(*gain).data();
                if let Some(gg) = self.slot(grads, *gain) {
                    for (gr, xr) in g.data().chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg.data_mut()[j] += gr[j] * xr[j];
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, *bias) {
                    for gr in g.data().chunks(d) {
                        for (dst, &s) in gb.data_mut().iter_mut().zip(gr) {
                            *dst += s;
                        }
                    }
                }
                if let Some(gx) = self.slot(grads, *x) {
                    let n = F::of(d as f64);
                    let mut dxhat = vec![F::zero(); d];
                    for (r, ((gr, xr), dr)) in g
                        .data()
                        .chunks(d)
                        .zip(xhat.chunks(d))
                        .zip(gx.data_mut().chunks_mut(d))
                        .enumerate()
                    {
                        let mut mean_d = F::zero();
                        let mut mean_dx = F::zero();
                        for j in 0..d {
                            dxhat[j] = gr[j] * gain_v[j];
                            mean_d += dxhat[j];
                            mean_dx += dxhat[j] * xr[j];
                        }
                        mean_d /= n;
                        mean_dx /= n;
                        for j in 0..d {
                            dr[j] += rstd[r] * (dxhat[j] - mean_d - xr[j] * mean_dx);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let xv = self.value(*a);
                if let Some(ga) = self.slot(grads, *a) {
                    for ((d, &s), &xi) in ga.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *d += s * kernels::gelu_derivative(xi);
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((d, &s), &m) in ga.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *d += s * m;
                    }
                }
            }
            Op::Block { src, row0, col0 } => {
                if let Some(gs) = self.slot(grads, *src) {
                    let width = g.cols();
                    for r in 0..g.rows() {
                        let dst = &mut gs.row_mut(row0 + r)[*col0..col0 + width];
                        for (d, &s) in dst.iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut col0 = 0;
                for &p in parts {
                    let width = self.value(p).cols();
                    if let Some(gp) = self.slot(grads, p) {
                        for r in 0..g.rows() {
                            for (d, &s) in gp.row_mut(r).iter_mut().zip(&g.row(r)[col0..col0 + width]) {
                                *d += s;
                            }
                        }
                    }
                    col0 += width;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(gp) = self.slot(grads, p) {
                        for (d, &s) in gp.data_mut().iter_mut().zip(&g.data()[offset..offset + len]) {
                            *d += s;
                        }
                    }
                    offset += len;
                }
            }
            Op::GatherRows(src, indices) => {
                if let Some(gs) = self.slot(grads, *src) {
                    for (r, &i) in indices.iter().enumerate() {
                        for (d, &s) in gs.row_mut(i).iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                }
            }
            Op::SmoothedCrossEntropy { logits, probs, targets } => {
                if let Some(gl) = self.slot(grads, *logits) {
                    let scale = g.data()[0] / F::of(gl.rows() as f64);
                    for ((d, &p), &q) in gl.data_mut().iter_mut().zip(probs).zip(targets) {
                        *d += scale * (p - q);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let s = g.data()[0];
                    for d in ga.data_mut() {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Result of a backward sweep.
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient of `v`, if it was reached by the sweep.
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros when `v` did not influence the root.
    pub fn wrt(&self, tape: &Tape<'_, F>, v: Var) -> Tensor<F> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
