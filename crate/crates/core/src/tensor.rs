//! Row-major 2-D tensor of `f64`.
//!
//! One type carries every vector and matrix in the crate: images, attack
//! perturbations, hidden vectors, gradients, and layer weights. Vectors are
//! stored as `1 x n` unless a caller builds them otherwise; all consumers
//! treat element count, not shape, as the contract where the math is
//! shape-agnostic (e.g. an image may be `side x side` while the model sees a
//! flat input of the same length).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Tensor2D {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "tensor {}x{} expects {} values, got {}",
                rows,
                cols,
                rows * cols,
                values.len()
            )));
        }
        let t = Tensor2D { rows, cols, values };
        t.check_finite()?;
        Ok(t)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2D {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    /// `1 x n` row vector.
    pub fn row(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Tensor2D::new(1, n, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite value {v} at flat index {i} in {}x{} tensor",
                    self.rows, self.cols
                )));
            }
        }
        Ok(())
    }

    pub fn same_len(&self, other: &Tensor2D) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "element count mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor2D) -> Result<f64> {
        self.same_len(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Tensor2D {
        Tensor2D {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Tensor2D) -> Result<Tensor2D> {
        self.same_len(other)?;
        Ok(Tensor2D {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Tensor2D) -> Result<Tensor2D> {
        self.same_len(other)?;
        Ok(Tensor2D {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &Tensor2D) -> Result<f64> {
        self.same_len(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Cosine of the angle between two equal-length tensors.
    ///
    /// Errors if either vector is zero; callers that want a sentinel for a
    /// zero vector handle that case before calling.
    pub fn cosine(&self, other: &Tensor2D) -> Result<f64> {
        let na = self.norm_l2();
        let nb = other.norm_l2();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::DegenerateSimilarity(
                "cosine of a zero vector".to_string(),
            ));
        }
        let c = self.dot(other)? / (na * nb);
        Ok(c.clamp(-1.0, 1.0))
    }

    /// Bitwise equality, distinguishing e.g. `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Tensor2D) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
