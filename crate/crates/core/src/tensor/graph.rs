use alloc::vec;
use alloc::vec::Vec;

use super::{Tensor, TensorError};
use crate::real::Real;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Concat(Vec<Var>),
    Slice { input: Var, start: usize },
    Reshape(Var),
    Transpose(Var),
    Sigmoid(Var),
    Gelu(Var),
    Softmax { input: Var, axis: usize },
    Log(Var),
    Exp(Var),
    LogSumExp { input: Var, axis: usize },
    LayerNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Sum { input: Var, axis: Option<usize> },
    Mean { input: Var, axis: Option<usize> },
    Clamp { input: Var, lo: T, hi: T },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Append-only record of a forward computation.
///
/// Nodes are created in evaluation order, so reverse index order is a valid
/// topological order for the backward sweep.
#[derive(Debug, Clone)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    backpropagated: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// `(outer, dim, inner)` such that flat index = `(o·dim + j)·inner + i`.
fn axis_geometry(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.iter().enumerate().filter(|(i, _)| *i != axis).map(|(_, d)| *d).collect();
    if s.is_empty() {
        s.push(1);
    }
    s
}

/// `c[m×n] += a[m×k] · b[k×n]`
fn gemm<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`
fn gemm_bt<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::ZERO;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            c[i * k + p] += acc;
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
fn gemm_at<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::ZERO {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

const LN_EPS: f64 = 1e-5;

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backpropagated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, shape: Vec<usize>, values: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].value.requires_grad);
        let value = Tensor {
            shape,
            values,
            requires_grad,
            grad: None,
        };
        self.push(value, op)
    }

    /// Adds a leaf. Its `requires_grad` flag decides whether gradients flow to it.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let mut t = t;
        t.grad = None;
        self.push(t, Op::Leaf)
    }

    /// Adds a leaf that never receives gradients.
    pub fn constant(&mut self, mut t: Tensor<T>) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn vals(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.values()
    }

    fn check_axis(&self, v: Var, axis: usize) -> Result<(), TensorError> {
        let shape = self.shape(v);
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                shape: shape.to_vec(),
            });
        }
        Ok(())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeError {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let shape = self.shape(a).to_vec();
        let values = self.vals(a).iter().map(|&x| f(x)).collect();
        self.derived(shape, values, op, &[a])
    }

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeError {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::ZERO; m * n];
        gemm(self.vals(a), self.vals(b), &mut out, m, k, n);
        Ok(self.derived(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    /// Element-wise sum of equal shapes, or `a + b` with `b` a row vector
    /// broadcast over the leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa == sb {
            let values = self.vals(a).iter().zip(self.vals(b)).map(|(&x, &y)| x + y).collect();
            return Ok(self.derived(sa, values, Op::Add(a, b), &[a, b]));
        }
        let last = *sa.last().unwrap_or(&0);
        let is_row = sb.iter().product::<usize>() == last && sb.last() == Some(&last) && sb.iter().rev().skip(1).all(|&d| d == 1);
        if !is_row {
            return Err(TensorError::ShapeError { op: "add", lhs: sa, rhs: sb });
        }
        let bv = self.vals(b);
        let values = self
            .vals(a)
            .chunks(last)
            .flat_map(|row| row.iter().zip(bv).map(|(&x, &y)| x + y))
            .collect();
        Ok(self.derived(sa, values, Op::AddRow(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        let shape = self.shape(a).to_vec();
        let values = self.vals(a).iter().zip(self.vals(b)).map(|(&x, &y)| x - y).collect();
        Ok(self.derived(shape, values, Op::Sub(a, b), &[a, b]))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let shape = self.shape(a).to_vec();
        let values = self.vals(a).iter().zip(self.vals(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.derived(shape, values, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    /// Concatenation along the last dimension.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = self.shape(parts[0]).to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(TensorError::ShapeError {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut values = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                values.extend_from_slice(&self.vals(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(self.derived(shape, values, Op::Concat(parts.to_vec()), parts))
    }

    /// Columns `start..start+len` of the last dimension.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        let width = *shape.last().unwrap_or(&0);
        if start + len > width || len == 0 {
            let mut rhs = shape.clone();
            *rhs.last_mut().unwrap() = start + len;
            return Err(TensorError::ShapeError { op: "slice", lhs: shape, rhs });
        }
        let values = self
            .vals(a)
            .chunks(width)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        Ok(self.derived(out_shape, values, Op::Slice { input: a, start }, &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        if shape.iter().product::<usize>() != self.value(a).numel() {
            return Err(TensorError::ShapeError {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let values = self.vals(a).to_vec();
        Ok(self.derived(shape.to_vec(), values, Op::Reshape(a), &[a]))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::ShapeError {
                op: "transpose",
                lhs: shape,
                rhs: Vec::new(),
            });
        }
        let (r, c) = (shape[0], shape[1]);
        let src = self.vals(a);
        let mut values = vec![T::ZERO; r * c];
        for i in 0..r {
            for j in 0..c {
                values[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.derived(vec![c, r], values, Op::Transpose(a), &[a]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let half = T::from_f64(0.5);
        let inv_sqrt2 = T::from_f64(core::f64::consts::FRAC_1_SQRT_2);
        self.unary(a, |x| half * x * (T::ONE + (x * inv_sqrt2).erf()), Op::Gelu(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, T::ln, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, T::exp, Op::Exp(a))
    }

    /// Clamps into `[lo, hi]`; gradient passes only inside the interval.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        self.unary(a, |x| x.max(lo).min(hi), Op::Clamp { input: a, lo, hi })
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.check_axis(a, axis)?;
        let shape = self.shape(a).to_vec();
        let (outer, dim, inner) = axis_geometry(&shape, axis);
        let x = self.vals(a);
        let mut y = vec![T::ZERO; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * dim + j) * inner + i;
                let m = (0..dim).map(|j| x[idx(j)]).fold(x[idx(0)], T::max);
                let mut total = T::ZERO;
                for j in 0..dim {
                    let e = (x[idx(j)] - m).exp();
                    y[idx(j)] = e;
                    total += e;
                }
                for j in 0..dim {
                    y[idx(j)] /= total;
                }
            }
        }
        Ok(self.derived(shape, y, Op::Softmax { input: a, axis }, &[a]))
    }

    /// `log Σ exp` along `axis` (max-shifted); the axis is removed.
    pub fn logsumexp(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.check_axis(a, axis)?;
        let shape = self.shape(a).to_vec();
        let (outer, dim, inner) = axis_geometry(&shape, axis);
        let x = self.vals(a);
        let mut out = vec![T::ZERO; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * dim + j) * inner + i;
                let m = (0..dim).map(|j| x[idx(j)]).fold(x[idx(0)], T::max);
                let s = (0..dim).fold(T::ZERO, |acc, j| acc + (x[idx(j)] - m).exp());
                out[o * inner + i] = m + s.ln();
            }
        }
        Ok(self.derived(reduced_shape(&shape, axis), out, Op::LogSumExp { input: a, axis }, &[a]))
    }

    /// Layer normalization over the last dimension with learned scale and
    /// shift vectors.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        let d = *shape.last().unwrap_or(&0);
        for p in [gamma, beta] {
            if self.value(p).numel() != d {
                return Err(TensorError::ShapeError {
                    op: "layer_norm",
                    lhs: shape.clone(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let eps = T::from_f64(LN_EPS);
        let inv_d = T::from_f64(1.0 / d as f64);
        let x = self.vals(a);
        let (g, b) = (self.vals(gamma), self.vals(beta));
        let rows = x.len() / d;
        let mut xhat = vec![T::ZERO; x.len()];
        let mut inv_std = vec![T::ZERO; rows];
        let mut y = vec![T::ZERO; x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().fold(T::ZERO, |s, &v| s + v) * inv_d;
            let var = row.iter().fold(T::ZERO, |s, &v| s + (v - mean) * (v - mean)) * inv_d;
            let inv = T::ONE / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                y[r * d + j] = h * g[j] + b[j];
            }
        }
        Ok(self.derived(
            shape,
            y,
            Op::LayerNorm {
                input: a,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[a, gamma, beta],
        ))
    }

    /// Sum along `axis`, or over everything when `axis` is `None`.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        self.reduce(a, axis, false)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        self.reduce(a, axis, true)
    }

    fn reduce(&mut self, a: Var, axis: Option<usize>, mean: bool) -> Result<Var, TensorError> {
        let shape = self.shape(a).to_vec();
        let x = self.vals(a);
        match axis {
            None => {
                let mut s = x.iter().fold(T::ZERO, |acc, &v| acc + v);
                if mean {
                    s /= T::from_f64(x.len() as f64);
                }
                let op = if mean { Op::Mean { input: a, axis } } else { Op::Sum { input: a, axis } };
                Ok(self.derived(vec![1], vec![s], op, &[a]))
            }
            Some(ax) => {
                self.check_axis(a, ax)?;
                let (outer, dim, inner) = axis_geometry(&shape, ax);
                let mut out = vec![T::ZERO; outer * inner];
                for o in 0..outer {
                    for j in 0..dim {
                        for i in 0..inner {
                            out[o * inner + i] += x[(o * dim + j) * inner + i];
                        }
                    }
                }
                if mean {
                    let inv = T::from_f64(1.0 / dim as f64);
                    out.iter_mut().for_each(|v| *v *= inv);
                }
                let op = if mean { Op::Mean { input: a, axis } } else { Op::Sum { input: a, axis } };
                Ok(self.derived(reduced_shape(&shape, ax), out, op, &[a]))
            }
        }
    }

    /// Clears every gradient so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
        self.backpropagated = false;
    }

    /// Reverse sweep from a scalar loss. Populates `grad` on every node that
    /// requires one.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.backpropagated {
            return Err(TensorError::AlreadyBackpropagated);
        }
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NotScalar(self.shape(loss).to_vec()));
        }
        self.backpropagated = true;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::ONE]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].value.requires_grad {
                continue;
            }
            self.backward_node(id, &g, &mut grads);
            self.nodes[id].value.grad = Some(g);
        }
        Ok(())
    }

    fn backward_node(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let y = node.value.values();
        let mut send = |v: Var, f: &dyn Fn(&mut [T])| {
            if !self.nodes[v.0].value.requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::ZERO; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                send(*a, &|da| gemm_bt(g, self.vals(*b), da, m, n, k));
                send(*b, &|db| gemm_at(self.vals(*a), g, db, m, k, n));
            }
            Op::Add(a, b) => {
                send(*a, &|d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g));
                send(*b, &|d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g));
            }
            Op::AddRow(a, b) => {
                send(*a, &|d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g));
                send(*b, &|d| {
                    let w = d.len();
                    for row in g.chunks(w) {
                        d.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
                    }
                });
            }
            Op::Sub(a, b) => {
                send(*a, &|d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g));
                send(*b, &|d| d.iter_mut().zip(g).for_each(|(d, &g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.vals(*a), self.vals(*b));
                send(*a, &|d| d.iter_mut().zip(g).zip(bv).for_each(|((d, &g), &b)| *d += g * b));
                send(*b, &|d| d.iter_mut().zip(g).zip(av).for_each(|((d, &g), &a)| *d += g * a));
            }
            Op::Scale(a, c) => send(*a, &|d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * *c)),
            Op::AddScalar(a) => send(*a, &|d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g)),
            Op::Concat(parts) => {
                let total = *node.value.shape().last().unwrap();
                let mut offset = 0;
                for p in parts {
                    let w = *self.shape(*p).last().unwrap();
                    send(*p, &|d| {
                        for (r, row) in d.chunks_mut(w).enumerate() {
                            let src = &g[r * total + offset..r * total + offset + w];
                            row.iter_mut().zip(src).for_each(|(d, &g)| *d += g);
                        }
                    });
                    offset += w;
                }
            }
            Op::Slice { input, start } => {
                let len = *node.value.shape().last().unwrap();
                let width = *self.shape(*input).last().unwrap();
                send(*input, &|d| {
                    for (row, grow) in d.chunks_mut(width).zip(g.chunks(len)) {
                        row[*start..start + len].iter_mut().zip(grow).for_each(|(d, &g)| *d += g);
                    }
                });
            }
            Op::Reshape(a) => send(*a, &|d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g)),
            Op::Transpose(a) => {
                let s = self.shape(*a);
                let (r, c) = (s[0], s[1]);
                send(*a, &|d| {
                    for i in 0..r {
                        for j in 0..c {
                            d[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => send(*a, &|d| {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(y) {
                    *d += g * y * (T::ONE - y);
                }
            }),
            Op::Gelu(a) => {
                let x = self.vals(*a);
                let inv_sqrt2 = T::from_f64(core::f64::consts::FRAC_1_SQRT_2);
                let inv_sqrt2pi = T::from_f64(0.398_942_280_401_432_7);
                let half = T::from_f64(0.5);
                send(*a, &|d| {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                        let cdf = half * (T::ONE + (x * inv_sqrt2).erf());
                        let pdf = inv_sqrt2pi * (-half * x * x).exp();
                        *d += g * (cdf + x * pdf);
                    }
                });
            }
            Op::Log(a) => {
                let x = self.vals(*a);
                send(*a, &|d| d.iter_mut().zip(g).zip(x).for_each(|((d, &g), &x)| *d += g / x));
            }
            Op::Exp(a) => send(*a, &|d| d.iter_mut().zip(g).zip(y).for_each(|((d, &g), &y)| *d += g * y)),
            Op::Clamp { input, lo, hi } => {
                let x = self.vals(*input);
                send(*input, &|d| {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                        if x >= *lo && x <= *hi {
                            *d += g;
                        }
                    }
                });
            }
            Op::Softmax { input, axis } => {
                let (outer, dim, inner) = axis_geometry(node.value.shape(), *axis);
                send(*input, &|d| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| (o * dim + j) * inner + i;
                            let dot = (0..dim).fold(T::ZERO, |s, j| s + g[idx(j)] * y[idx(j)]);
                            for j in 0..dim {
                                d[idx(j)] += y[idx(j)] * (g[idx(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LogSumExp { input, axis } => {
                let x = self.vals(*input);
                let (outer, dim, inner) = axis_geometry(self.shape(*input), *axis);
                send(*input, &|d| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| (o * dim + j) * inner + i;
                            let lse = y[o * inner + i];
                            let go = g[o * inner + i];
                            for j in 0..dim {
                                d[idx(j)] += go * (x[idx(j)] - lse).exp();
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = self.value(*gamma).numel();
                let gv = self.vals(*gamma);
                send(*gamma, &|dg| {
                    for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            dg[j] += grow[j] * hrow[j];
                        }
                    }
                });
                send(*beta, &|db| {
                    for grow in g.chunks(d) {
                        db.iter_mut().zip(grow).for_each(|(b, &g)| *b += g);
                    }
                });
                let n = T::from_f64(d as f64);
                send(*input, &|dx| {
                    for (r, ((dxr, grow), hrow)) in dx.chunks_mut(d).zip(g.chunks(d)).zip(xhat.chunks(d)).enumerate() {
                        let mut sum_dh = T::ZERO;
                        let mut sum_dh_h = T::ZERO;
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hrow[j];
                        }
                        let scale = inv_std[r] / n;
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            dxr[j] += scale * (n * dh - sum_dh - hrow[j] * sum_dh_h);
                        }
                    }
                });
            }
            Op::Sum { input, axis } | Op::Mean { input, axis } => {
                let is_mean = matches!(node.op, Op::Mean { .. });
                let in_shape = self.shape(*input);
                match axis {
                    None => {
                        let n = self.value(*input).numel();
                        let v = if is_mean { g[0] / T::from_f64(n as f64) } else { g[0] };
                        send(*input, &|d| d.iter_mut().for_each(|d| *d += v));
                    }
                    Some(ax) => {
                        let (outer, dim, inner) = axis_geometry(in_shape, *ax);
                        let f = if is_mean { T::from_f64(1.0 / dim as f64) } else { T::ONE };
                        send(*input, &|d| {
                            for o in 0..outer {
                                for j in 0..dim {
                                    for i in 0..inner {
                                        d[(o * dim + j) * inner + i] += g[o * inner + i] * f;
                                    }
                                }
                            }
                        });
                    }
                }
            }
        }
    }
}
