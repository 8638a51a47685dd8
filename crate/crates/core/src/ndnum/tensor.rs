use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Variance guard added inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn from_f64(shape: impl Into<Vec<usize>>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// I.i.d. normal entries with the given standard deviation.
    pub fn randn<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, std: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| {
            let g: f64 = rng.sample(StandardNormal);
            T::lit(g * std)
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Converts the element type, e.g. `f32` to `f64` for gradient checks.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
            off = off * n + i;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, &shape));
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape("elementwise", &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// Sequential left-to-right sum.
    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs().as_f64())
            .fold(0.0, f64::max)
    }

    /// Number of rows when the last axis is treated as the row length.
    pub(crate) fn rows_and_width(&self) -> (usize, usize) {
        let width = *self.shape.last().unwrap_or(&1);
        let rows = if width == 0 { 0 } else { self.data.len() / width };
        (rows, width)
    }

    /// Matrix product. `self` may carry leading batch axes that are flattened
    /// into rows: `(..., k) x (k, n) -> (..., n)`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ndim() < 1 || other.ndim() != 2 || self.shape.last() != Some(&other.shape[0]) {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let (rows, k) = self.rows_and_width();
        let n = other.shape[1];
        let mut out = vec![T::zero(); rows * n];
        kernels::gemm(rows, k, n, &self.data, false, &other.data, false, &mut out, false);
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = n;
        Self::new(shape, out)
    }

    /// Batched product `(B, m, k) x (B, k, n)`, or `(B, m, k) x (B, n, k)^T`
    /// when `transpose_rhs` is set.
    pub fn bmm(&self, other: &Self, transpose_rhs: bool) -> Result<Self> {
        let err = || Error::shape("bmm", &self.shape, &other.shape);
        if self.ndim() != 3 || other.ndim() != 3 || self.shape[0] != other.shape[0] {
            return Err(err());
        }
        let (batch, m, k) = (self.shape[0], self.shape[1], self.shape[2]);
        let (kb, n) = if transpose_rhs {
            (other.shape[2], other.shape[1])
        } else {
            (other.shape[1], other.shape[2])
        };
        if kb != k {
            return Err(err());
        }
        let mut out = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            kernels::gemm(
                m,
                k,
                n,
                &self.data[bi * m * k..(bi + 1) * m * k],
                false,
                &other.data[bi * k * n..(bi + 1) * k * n],
                transpose_rhs,
                &mut out[bi * m * n..(bi + 1) * m * n],
                false,
            );
        }
        Self::new(vec![batch, m, n], out)
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Self> {
        if axis >= self.ndim() {
            return Err(Error::Contract(format!(
                "softmax axis {axis} out of range for shape {:?}",
                self.shape
            )));
        }
        let last = self.ndim() - 1;
        if axis == last {
            let (rows, width) = self.rows_and_width();
            let mut out = self.data.clone();
            for r in 0..rows {
                kernels::softmax_row(&mut out[r * width..(r + 1) * width], None);
            }
            return Self::new(self.shape.clone(), out);
        }
        let mut axes: Vec<usize> = (0..self.ndim()).collect();
        axes.swap(axis, last);
        self.permute(&axes).softmax(last).map(|t| t.permute(&axes))
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// the affine `gain`/`bias` pair.
    pub fn layer_norm(&self, gain: &Self, bias: &Self) -> Result<Self> {
        let (rows, width) = self.rows_and_width();
        if gain.shape != [width] || bias.shape != [width] {
            return Err(Error::shape("layer_norm", &self.shape, gain.shape()));
        }
        let mut out = vec![T::zero(); self.data.len()];
        for r in 0..rows {
            let row = &self.data[r * width..(r + 1) * width];
            let (mean, rstd) = kernels::row_moments(row);
            for j in 0..width {
                out[r * width + j] = (row[j] - mean) * rstd * gain.data[j] + bias.data[j];
            }
        }
        Self::new(self.shape.clone(), out)
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Self {
        let nd = self.ndim();
        assert_eq!(axes.len(), nd, "permute rank mismatch");
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let mut in_strides = vec![1usize; nd];
        for i in (0..nd.saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * self.shape[i + 1];
        }
        let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; nd];
        let total = self.data.len();
        if total > 0 {
            let inner = nd - 1;
            let inner_len = new_shape[inner];
            let inner_stride = strides[inner];
            loop {
                let base: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
                for j in 0..inner_len {
                    out.push(self.data[base + j * inner_stride]);
                }
                // advance the outer multi-index
                let mut ax = inner;
                loop {
                    if ax == 0 {
                        return Self {
                            shape: new_shape,
                            data: out,
                        };
                    }
                    ax -= 1;
                    idx[ax] += 1;
                    if idx[ax] < new_shape[ax] {
                        break;
                    }
                    idx[ax] = 0;
                }
            }
        }
        Self {
            shape: new_shape,
            data: out,
        }
    }

    /// Concatenates along axis 0.
    pub fn concat0(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.ndim() == 0 || &p.shape[1..] != tail {
                return Err(Error::shape("concat0", &first.shape, &p.shape));
            }
            lead += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = lead;
        Self::new(shape, data)
    }

    /// Rows `start..end` along axis 0.
    pub fn slice0(&self, start: usize, end: usize) -> Result<Self> {
        if self.ndim() == 0 || start > end || end > self.shape[0] {
            return Err(Error::Contract(format!(
                "slice {start}..{end} out of range for {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Self::new(shape, self.data[start * inner..end * inner].to_vec())
    }

    /// Gathers the listed axis-0 rows in order.
    pub fn select0(&self, rows: &[usize]) -> Result<Self> {
        let inner: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(rows.len() * inner);
        for &r in rows {
            if r >= self.shape[0] {
                return Err(Error::Contract(format!("row {r} out of range")));
            }
            data.extend_from_slice(&self.data[r * inner..(r + 1) * inner]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Self::new(shape, data)
    }
}

/// Raw slice kernels shared by eager tensors and the autodiff graph.
pub(crate) mod kernels {
    use crate::scalar::Scalar;

    /// `C (m x n) = op(A) * op(B) (+ C if accumulate)`, all row-major.
    /// `trans_a` means `a` is stored `(k x m)`; `trans_b` means `b` is `(n x k)`.
    #[allow(clippy::too_many_arguments)]
    pub fn gemm<T: Scalar>(
        m: usize,
        k: usize,
        n: usize,
        a: &[T],
        trans_a: bool,
        b: &[T],
        trans_b: bool,
        c: &mut [T],
        accumulate: bool,
    ) {
        let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
        let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
        let beta = if accumulate { T::one() } else { T::zero() };
        if k == 0 {
            if !accumulate {
                c.iter_mut().for_each(|v| *v = T::zero());
            }
            return;
        }
        if m * k * n <= SMALL_GEMM {
            // packing overhead dominates for the tiny per-head products
            for i in 0..m {
                for j in 0..n {
                    let mut acc = T::zero();
                    for p in 0..k {
                        acc += a[i * rsa as usize + p * csa as usize] * b[p * rsb as usize + j * csb as usize];
                    }
                    let o = &mut c[i * n + j];
                    *o = if accumulate { *o + acc } else { acc };
                }
            }
            return;
        }
        T::gemm(m, k, n, T::one(), a, rsa, csa, b, rsb, csb, beta, c, n as isize, 1);
    }

    const SMALL_GEMM: usize = 2048;

    /// In-place softmax of one row; masked-out entries become exactly zero.
    pub fn softmax_row<T: Scalar>(row: &mut [T], allowed: Option<&[bool]>) {
        let ok = |j: usize| allowed.is_none_or(|m| m[j]);
        let mut max = T::neg_infinity();
        for (j, &v) in row.iter().enumerate() {
            if ok(j) && v > max {
                max = v;
            }
        }
        let mut total = T::zero();
        for (j, v) in row.iter_mut().enumerate() {
            if ok(j) {
                *v = (*v - max).exp();
                total += *v;
            } else {
                *v = T::zero();
            }
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }

    /// Mean and reciprocal standard deviation (population, eps-guarded).
    pub fn row_moments<T: Scalar>(row: &[T]) -> (T, T) {
        let n = T::lit(row.len() as f64);
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
        let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
        (mean, (var + T::lit(super::LAYER_NORM_EPS)).sqrt().recip())
    }
}
