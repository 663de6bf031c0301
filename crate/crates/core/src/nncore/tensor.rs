//! Shape + row-major `f64` storage, with the handful of constructors and
//! accessors the rest of the crate needs.

use rand::Rng;
use std::fmt;

/// Dense tensor of 64-bit floats in row-major order.
///
/// Rank is arbitrary, but almost all operations in this crate interpret
/// tensors as matrices (`[rows, cols]`); [`Tensor::reshape`] is free and
/// only relabels the shape. All stored values are finite: constructors
/// reject NaN/Inf, and the tape asserts finiteness on every operation
/// output, so a non-finite value anywhere is a bug, not a state.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} values]", self.data.len())
        }
    }
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data.
    ///
    /// Panics if the element count does not match the shape or any value is
    /// non-finite; both are programming errors in this crate.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {:?} wants {} values, got {}",
            shape,
            numel,
            data.len()
        );
        let t = Tensor { shape, data };
        t.assert_finite("Tensor::new");
        t
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Tensor {
        assert!(value.is_finite(), "Tensor::full with non-finite value");
        let numel = shape.iter().product();
        Tensor { shape, data: vec![value; numel] }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::new(vec![1, 1], vec![value])
    }

    /// Row-major matrix filled by `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Tensor {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor::new(vec![rows, cols], data)
    }

    /// I.i.d. normal entries with the given standard deviation.
    pub fn randn(shape: Vec<usize>, std: f64, rng: &mut impl Rng) -> Tensor {
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            // Box-Muller on open-interval uniforms; avoids ln(0).
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            data.push(std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos());
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows when viewed as a matrix.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "expected a matrix, got shape {:?}", self.shape);
        self.shape[0]
    }

    /// Number of columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "expected a matrix, got shape {:?}", self.shape);
        self.shape[1]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        let cols = self.cols();
        self.data[r * cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    /// Relabels the shape; element count must be preserved.
    pub fn reshape(mut self, shape: Vec<usize>) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, self.data.len(), "reshape {:?} -> {:?}", self.shape, shape);
        self.shape = shape;
        self
    }

    /// The single value of a 1-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn assert_finite(&self, context: &str) {
        assert!(self.is_finite(), "non-finite value produced by {context}");
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "shape mismatch in elementwise op");
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "shape mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `out = a @ b` for row-major matrices, accumulating over `k`.
///
/// The i-k-j loop order keeps both `b` and `out` accesses sequential, which
/// is what makes the training loop affordable without a BLAS dependency.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for (a_row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (aik, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            if *aik == 0.0 {
                continue;
            }
            for (o, bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out = a @ b^T`: `a` is `m x k`, `b` is `n x k`.
pub(crate) fn matmul_nt_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for (a_row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (o, b_row) in out_row.iter_mut().zip(b.chunks_exact(k)) {
            *o = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
}

/// `out = a^T @ b`: `a` is `k x m`, `b` is `k x n`.
pub(crate) fn matmul_tn_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for (a_row, b_row) in a.chunks_exact(m).zip(b.chunks_exact(n)) {
        for (aki, out_row) in a_row.iter().zip(out.chunks_exact_mut(n)) {
            if *aki == 0.0 {
                continue;
            }
            for (o, bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
}
