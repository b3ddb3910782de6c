//! Dense row-major f32 tensor with the handful of operations the layers need.
//!
//! All operations are pure: inputs are never mutated, and every operation
//! returns a fresh tensor. There is no broadcasting beyond scalar-with-tensor
//! and no strided views; reshapes are explicit.

use crate::error::{Error, Result};

/// Row-major N-dimensional array of `f32`.
///
/// Invariants, enforced by every constructor:
/// - `data.len()` equals the product of the shape extents,
/// - the shape is non-empty and every extent is at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// Reduction operator for [`Tensor::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
    Mean,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("tensor shape must be non-empty"));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!(
            "tensor shape {shape:?} has a zero extent"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::shape(format!("tensor shape {shape:?} overflows element count")))
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = check_shape(&shape)?;
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; n],
        })
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![value; n],
        })
    }

    /// Rank-1 tensor from a plain vector.
    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the flat buffer. Values may be rewritten freely;
    /// the shape invariant cannot be broken through this view.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same buffer under a new shape with an identical element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let expected = check_shape(&shape)?;
        if expected != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) into {shape:?} ({expected} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    /// Element at `[i, j]` of a rank-2 tensor.
    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f32 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Applies `f` elementwise; the shape is preserved.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise op on mismatched shapes {:?} and {:?}",
                self.shape, other.shape
            )));
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
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f32) -> Self {
        self.map(|v| v * s)
    }

    /// Matrix product of two rank-2 tensors `[m,k] x [k,n] -> [m,n]`.
    /// Accumulates in f64 and rounds once per output element.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::shape(format!(
                "matmul requires rank-2 operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let mut acc = 0.0f64;
                for (p, &a) in row.iter().enumerate() {
                    acc += a as f64 * other.data[p * n + j] as f64;
                }
                out[i * n + j] = acc as f32;
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::shape(format!(
                "transpose requires a rank-2 tensor, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Reduces along `axis`, or over all elements when `axis` is `None`.
    ///
    /// The reduced extent is removed from the shape; a full reduction (and a
    /// rank-1 axis reduction) collapses to a `[1]` scalar tensor. Sums and
    /// means accumulate in f64.
    pub fn reduce(&self, op: ReduceOp, axis: Option<usize>) -> Result<Self> {
        match axis {
            None => Ok(Self::scalar(reduce_slice(op, self.data.iter().copied()))),
            Some(ax) => {
                if ax >= self.rank() {
                    return Err(Error::shape(format!(
                        "reduce axis {ax} out of range for shape {:?}",
                        self.shape
                    )));
                }
                let mut out_shape: Vec<usize> = self
                    .shape
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != ax)
                    .map(|(_, &e)| e)
                    .collect();
                if out_shape.is_empty() {
                    out_shape.push(1);
                }
                let outer: usize = self.shape[..ax].iter().product();
                let extent = self.shape[ax];
                let inner: usize = self.shape[ax + 1..].iter().product();
                let mut out = Vec::with_capacity(outer * inner);
                for o in 0..outer {
                    for i in 0..inner {
                        let vals = (0..extent).map(|e| self.data[(o * extent + e) * inner + i]);
                        out.push(reduce_slice(op, vals));
                    }
                }
                Self::new(out_shape, out)
            }
        }
    }
}

fn reduce_slice(op: ReduceOp, vals: impl Iterator<Item = f32>) -> f32 {
    match op {
        ReduceOp::Sum => vals.map(|v| v as f64).sum::<f64>() as f32,
        ReduceOp::Max => vals.fold(f32::NEG_INFINITY, f32::max),
        ReduceOp::Mean => {
            let mut sum = 0.0f64;
            let mut n = 0usize;
            for v in vals {
                sum += v as f64;
                n += 1;
            }
            (sum / n as f64) as f32
        }
    }
}
