//! Dense row-major 2-d tensors in 64-bit precision.
//!
//! Vectors are represented as 1×d row matrices so that every composite
//! operation reduces to matrix products and elementwise maps.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes are incompatible for the requested operation.
    ShapeMismatch(String),
    /// A softmax mask with no active entries.
    EmptyMask,
    /// A non-finite value was produced or supplied.
    NonFinite(String),
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            TensorError::EmptyMask => write!(f, "masked softmax requires at least one active slot"),
            TensorError::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "value count must equal product of extents");
        Tensor { rows, cols, data }
    }

    pub fn row_vec(data: Vec<f64>) -> Self {
        let cols = data.len();
        Tensor { rows: 1, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_tensor(&self, r: usize) -> Tensor {
        Tensor::row_vec(self.row(r).to_vec())
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Standard matrix product with a shape-checked public contract.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.cols != other.rows {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if !self.same_shape(other) {
            return Err(TensorError::ShapeMismatch(format!(
                "add {}x{} + {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        let data = self.data.iter().map(|v| alpha * v).collect();
        Tensor { rows: self.rows, cols: self.cols, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data.iter().map(|v| f(*v)).collect();
        Tensor { rows: self.rows, cols: self.cols, data }
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }
}

/// Exp-normalize `scores` over the slots where `mask` is true.
///
/// The active-entry maximum is subtracted before exponentiation so arbitrary
/// score magnitudes stay in range. Masked slots are exactly zero in the output.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>, TensorError> {
    if scores.len() != mask.len() {
        return Err(TensorError::ShapeMismatch(format!(
            "masked_softmax scores len {} vs mask len {}",
            scores.len(),
            mask.len()
        )));
    }
    let mut max = f64::NEG_INFINITY;
    for (s, &m) in scores.iter().zip(mask) {
        if m && *s > max {
            max = *s;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(TensorError::EmptyMask);
    }
    let mut out = vec![0.0; scores.len()];
    let mut sum = 0.0;
    for (i, (s, &m)) in scores.iter().zip(mask).enumerate() {
        if m {
            let e = math::exp(s - max);
            out[i] = e;
            sum += e;
        }
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}

/// Per-vector layer normalization: `(x - mean) / sqrt(var + eps)`, then gain
/// and bias.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>, TensorError> {
    if x.len() != gain.len() || x.len() != bias.len() {
        return Err(TensorError::ShapeMismatch(format!(
            "layer_norm x len {} gain len {} bias len {}",
            x.len(),
            gain.len(),
            bias.len()
        )));
    }
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv = 1.0 / math::sqrt(var + eps);
    Ok(x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(v, (g, b))| g * (v - mean) * inv + b)
        .collect())
}
