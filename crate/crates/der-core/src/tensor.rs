//! Dense row-major matrices of `f64`.
//!
//! Everything the learners touch — observations, Q-values, network weights,
//! gradients — is carried as a rank-2 tensor. Vectors are `1 x n` rows and
//! scalars are `1 x 1`, which keeps the shape algebra of the graph primitives
//! trivial to state and check.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape {rows}x{cols} does not match data length {len}")]
    LengthMismatch { rows: usize, cols: usize, len: usize },
    #[error("zero-sized dimension in shape {rows}x{cols}")]
    ZeroDim { rows: usize, cols: usize },
    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
}

/// Dense `rows x cols` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    /// Checked constructor: validates the length invariant and rejects
    /// NaN/Inf entries. Use at trust boundaries (file loads, bindings built
    /// from the environment) and in tests.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::ZeroDim { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(TensorError::LengthMismatch { rows, cols, len: data.len() });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(TensorError::NonFinite { index, value });
        }
        Ok(Self { rows, cols, data })
    }

    /// Unchecked-finiteness constructor for the training hot loop. The length
    /// invariant is still enforced (debug builds also scan for non-finite
    /// entries, matching the checked-in-tests / off-in-release switch).
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized dimension");
        assert_eq!(data.len(), rows * cols, "shape/data length mismatch");
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite entry in tensor"
        );
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, vec![value])
    }

    /// A `1 x n` row vector.
    pub fn row(values: &[f64]) -> Self {
        Self::from_vec(1, values.len(), values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
