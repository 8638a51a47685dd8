//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and the backward sweep is a single reverse pass.

use std::sync::Arc;

use super::tensor::{kernels, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, transpose_rhs: bool },
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Gelu { x: Var, tanh: Vec<T> },
    Relu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Permute { x: Var, axes: Vec<usize> },
    Reshape(Var),
    Concat0(Vec<Var>),
    Slice0 { x: Var, start: usize },
    Sum(Var),
    Mean(Var),
    Square(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// A differentiable computation recorded as it is evaluated.
///
/// Single-threaded by construction; independent graphs may be built on
/// separate threads.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that is not differentiated.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is collected by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn unary(&mut self, x: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let g = self.needs(x);
        self.push(value, op, g)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let g = self.needs(a) || self.needs(b);
        self.push(value, op, g)
    }

    /// `(..., k) x (k, n) -> (..., n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, value, Op::MatMul(a, b)))
    }

    pub fn bmm(&mut self, a: Var, b: Var, transpose_rhs: bool) -> Result<Var> {
        let value = self.value(a).bmm(self.value(b), transpose_rhs)?;
        Ok(self.binary(a, b, value, Op::Bmm { a, b, transpose_rhs }))
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let (rows, width) = xv.rows_and_width();
        if bv.shape() != [width] {
            return Err(Error::shape("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.data().to_vec();
        for r in 0..rows {
            for (o, &b) in out[r * width..(r + 1) * width].iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.binary(x, bias, value, Op::AddBias(x, bias)))
    }

    /// `x W + b` with `W: (in, out)`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = self.matmul(x, weight)?;
        self.add_bias(y, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.binary(a, b, value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.binary(a, b, value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.binary(a, b, value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).scale(c);
        self.unary(x, value, Op::Scale(x, c))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (c, a) = (T::lit(GELU_C), T::lit(GELU_A));
        let half = T::lit(0.5);
        let xv = self.value(x);
        let tanh: Vec<T> = xv.data().iter().map(|&v| (c * (v + a * v * v * v)).tanh()).collect();
        let out = xv.data().iter().zip(&tanh).map(|(&v, &t)| half * v * (T::one() + t)).collect();
        let value = Tensor::new(xv.shape().to_vec(), out).expect("gelu shape");
        self.unary(x, value, Op::Gelu { x, tanh })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.unary(x, value, Op::Relu(x))
    }

    /// Softmax over the last axis. `mask`, when present, is a row-major
    /// `(rows_per_block x width)` allow-pattern broadcast over all leading
    /// blocks; disallowed entries get probability exactly zero.
    pub fn softmax(&mut self, x: Var, mask: Option<Arc<[bool]>>) -> Result<Var> {
        let xv = self.value(x);
        let (rows, width) = xv.rows_and_width();
        let mut out = xv.data().to_vec();
        if let Some(m) = &mask {
            if width == 0 || m.len() % width != 0 || rows % (m.len() / width) != 0 {
                return Err(Error::shape("masked softmax", xv.shape(), &[m.len()]));
            }
        }
        let block = mask.as_ref().map(|m| m.len() / width);
        for r in 0..rows {
            let allowed = match (&mask, block) {
                (Some(m), Some(b)) => {
                    let mr = r % b;
                    Some(&m[mr * width..(mr + 1) * width])
                }
                _ => None,
            };
            if let Some(al) = allowed {
                if !al.iter().any(|&ok| ok) {
                    return Err(Error::Contract("attention row with no allowed keys".into()));
                }
            }
            kernels::softmax_row(&mut out[r * width..(r + 1) * width], allowed);
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.unary(x, value, Op::Softmax(x)))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, width) = xv.rows_and_width();
        let (gv, bv) = (self.value(gain), self.value(bias));
        if gv.shape() != [width] || bv.shape() != [width] {
            return Err(Error::shape("layer_norm", xv.shape(), gv.shape()));
        }
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv.data()[r * width..(r + 1) * width];
            let (mean, rs) = kernels::row_moments(row);
            rstd[r] = rs;
            for j in 0..width {
                let h = (row[j] - mean) * rs;
                xhat[r * width + j] = h;
                out[r * width + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        let g = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, xhat, rstd }, g))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Var {
        let value = self.value(x).permute(axes);
        self.unary(x, value, Op::Permute { x, axes: axes.to_vec() })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape.to_vec())?;
        Ok(self.unary(x, value, Op::Reshape(x)))
    }

    pub fn concat0(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat0(&tensors)?;
        let g = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::Concat0(parts.to_vec()), g))
    }

    pub fn slice0(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(x).slice0(start, end)?;
        Ok(self.unary(x, value, Op::Slice0 { x, start }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.unary(x, value, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let value = Tensor::scalar(xv.sum() / T::lit(xv.len().max(1) as f64));
        self.unary(x, value, Op::Mean(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.unary(x, value, Op::Square(x))
    }

    /// Mean softmax cross-entropy of `(n, classes)` logits against class ids.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, width) = lv.rows_and_width();
        if lv.ndim() != 2 || rows != targets.len() {
            return Err(Error::shape("cross_entropy", lv.shape(), &[targets.len()]));
        }
        let mut probs = lv.data().to_vec();
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t >= width {
                return Err(Error::Contract(format!("class {t} out of range {width}")));
            }
            let row = &mut probs[r * width..(r + 1) * width];
            kernels::softmax_row(row, None);
            total -= row[t].max(T::min_positive_value()).ln();
        }
        let value = Tensor::scalar(total / T::lit(rows.max(1) as f64));
        Ok(self.unary(logits, value, Op::CrossEntropy { logits, targets: targets.to_vec(), probs }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.propagate(node, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += *b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<T>, gy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (rows, k) = av.rows_and_width();
                let n = bv.shape()[1];
                if self.needs(*a) {
                    let mut da = vec![T::zero(); rows * k];
                    kernels::gemm(rows, n, k, gy.data(), false, bv.data(), true, &mut da, false);
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da).unwrap());
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); k * n];
                    kernels::gemm(k, rows, n, av.data(), true, gy.data(), false, &mut db, false);
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db).unwrap());
                }
            }
            Op::Bmm { a, b, transpose_rhs } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = y.shape()[2];
                let gd = gy.data();
                if self.needs(*a) {
                    let mut da = vec![T::zero(); av.len()];
                    for bi in 0..batch {
                        let g = &gd[bi * m * n..(bi + 1) * m * n];
                        let bb = &bv.data()[bi * k * n..(bi + 1) * k * n];
                        // dA = dC * op(B)^T
                        kernels::gemm(
                            m,
                            n,
                            k,
                            g,
                            false,
                            bb,
                            !*transpose_rhs,
                            &mut da[bi * m * k..(bi + 1) * m * k],
                            false,
                        );
                    }
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da).unwrap());
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); bv.len()];
                    for bi in 0..batch {
                        let g = &gd[bi * m * n..(bi + 1) * m * n];
                        let aa = &av.data()[bi * m * k..(bi + 1) * m * k];
                        let out = &mut db[bi * k * n..(bi + 1) * k * n];
                        if *transpose_rhs {
                            // B is (n, k): dB = dC^T A
                            kernels::gemm(n, m, k, g, true, aa, false, out, false);
                        } else {
                            // dB = A^T dC
                            kernels::gemm(k, m, n, aa, true, g, false, out, false);
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db).unwrap());
                }
            }
            Op::AddBias(x, bias) => {
                if self.needs(*bias) {
                    let (rows, width) = gy.rows_and_width();
                    let mut db = vec![T::zero(); width];
                    for r in 0..rows {
                        for (d, &g) in db.iter_mut().zip(&gy.data()[r * width..(r + 1) * width]) {
                            *d += g;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::new(vec![width], db).unwrap());
                }
                self.accumulate(grads, *x, gy.clone());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                self.accumulate(grads, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gy.clone());
                if self.needs(*b) {
                    self.accumulate(grads, *b, gy.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let g = gy.zip_map(self.value(*b), |g, v| g * v).unwrap();
                    self.accumulate(grads, *a, g);
                }
                if self.needs(*b) {
                    let g = gy.zip_map(self.value(*a), |g, v| g * v).unwrap();
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, gy.scale(*c)),
            Op::Gelu { x, tanh } => {
                let (c, a) = (T::lit(GELU_C), T::lit(GELU_A));
                let half = T::lit(0.5);
                let three = T::lit(3.0);
                let xv = self.value(*x);
                let data = gy
                    .data()
                    .iter()
                    .zip(xv.data())
                    .zip(tanh)
                    .map(|((&g, &v), &th)| {
                        let dth = (T::one() - th * th) * c * (T::one() + three * a * v * v);
                        g * (half * (T::one() + th) + half * v * dth)
                    })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data).unwrap());
            }
            Op::Relu(x) => {
                let g = gy
                    .zip_map(self.value(*x), |g, v| if v > T::zero() { g } else { T::zero() })
                    .unwrap();
                self.accumulate(grads, *x, g);
            }
            Op::Softmax(x) => {
                let (rows, width) = y.rows_and_width();
                let mut dx = vec![T::zero(); y.len()];
                for r in 0..rows {
                    let p = &y.data()[r * width..(r + 1) * width];
                    let g = &gy.data()[r * width..(r + 1) * width];
                    let dot = p.iter().zip(g).fold(T::zero(), |acc, (&p, &g)| acc + p * g);
                    for j in 0..width {
                        dx[r * width + j] = p[j] * (g[j] - dot);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), dx).unwrap());
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let (rows, width) = y.rows_and_width();
                let gv = self.value(*gain).data();
                let gd = gy.data();
                if self.needs(*gain) || self.needs(*bias) {
                    let mut dg = vec![T::zero(); width];
                    let mut db = vec![T::zero(); width];
                    for r in 0..rows {
                        for j in 0..width {
                            let g = gd[r * width + j];
                            dg[j] += g * xhat[r * width + j];
                            db[j] += g;
                        }
                    }
                    self.accumulate(grads, *gain, Tensor::new(vec![width], dg).unwrap());
                    self.accumulate(grads, *bias, Tensor::new(vec![width], db).unwrap());
                }
                if self.needs(*x) {
                    let n = T::lit(width as f64);
                    let mut dx = vec![T::zero(); y.len()];
                    for r in 0..rows {
                        let base = r * width;
                        let mut mean_d = T::zero();
                        let mut mean_dx = T::zero();
                        for j in 0..width {
                            let d = gd[base + j] * gv[j];
                            mean_d += d;
                            mean_dx += d * xhat[base + j];
                        }
                        mean_d /= n;
                        mean_dx /= n;
                        for j in 0..width {
                            let d = gd[base + j] * gv[j];
                            dx[base + j] = rstd[r] * (d - mean_d - xhat[base + j] * mean_dx);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), dx).unwrap());
                }
            }
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                self.accumulate(grads, *x, gy.permute(&inverse));
            }
            Op::Reshape(x) => {
                let g = gy.reshape(self.value(*x).shape().to_vec()).unwrap();
                self.accumulate(grads, *x, g);
            }
            Op::Concat0(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.value(p).shape()[0];
                    if self.needs(p) {
                        self.accumulate(grads, p, gy.slice0(start, start + len).unwrap());
                    }
                    start += len;
                }
            }
            Op::Slice0 { x, start } => {
                if self.needs(*x) {
                    let xv = self.value(*x);
                    let inner: usize = xv.shape()[1..].iter().product();
                    let mut g = Tensor::zeros(xv.shape().to_vec());
                    g.data_mut()[start * inner..start * inner + gy.len()].copy_from_slice(gy.data());
                    self.accumulate(grads, *x, g);
                }
            }
            Op::Sum(x) => {
                let s = gy.item();
                let g = Tensor::full(self.value(*x).shape().to_vec(), s);
                self.accumulate(grads, *x, g);
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let s = gy.item() / T::lit(xv.len().max(1) as f64);
                self.accumulate(grads, *x, Tensor::full(xv.shape().to_vec(), s));
            }
            Op::Square(x) => {
                let two = T::lit(2.0);
                let g = gy.zip_map(self.value(*x), |g, v| two * g * v).unwrap();
                self.accumulate(grads, *x, g);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let lv = self.value(*logits);
                let (rows, width) = lv.rows_and_width();
                let s = gy.item() / T::lit(rows.max(1) as f64);
                let mut g = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    g[r * width + t] -= T::one();
                }
                g.iter_mut().for_each(|v| *v *= s);
                self.accumulate(grads, *logits, Tensor::new(lv.shape().to_vec(), g).unwrap());
            }
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `v`, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient shaped like `v`'s value in `graph`; zeros when untouched.
    pub fn wrt(&self, graph: &Graph<T>, v: Var) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape().to_vec()))
    }
}

/// Gradients of `loss` for each listed parameter; untouched ones are zero.
pub fn reverse_grad<T: Scalar>(graph: &Graph<T>, loss: Var, params: &[Var]) -> Result<Vec<Tensor<T>>> {
    let grads = graph.backward(loss)?;
    Ok(params.iter().map(|&p| grads.wrt(graph, p)).collect())
}
