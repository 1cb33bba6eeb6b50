//! Dense f32 tensors in NCHW (rank 4) or row-major matrix (rank 2) layout.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("tensor rank must be 2 or 4, got {0}")]
    Rank(usize),
    #[error("tensor dimension {axis} is zero")]
    ZeroDim { axis: usize },
    #[error("shape {shape:?} holds {expected} elements but {actual} were supplied")]
    Length {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
}

/// Dense tensor of 32-bit floats.
///
/// Rank-4 tensors are `[N, C, H, W]`, rank-2 tensors are `[rows, cols]`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if shape.len() != 2 && shape.len() != 4 {
            return Err(TensorError::Rank(shape.len()));
        }
        if let Some(axis) = shape.iter().position(|&d| d == 0) {
            return Err(TensorError::ZeroDim { axis });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Length {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn full(shape: Vec<usize>, value: f32) -> Result<Self, TensorError> {
        let len = shape.iter().product();
        Self::new(shape, vec![value; len])
    }

    /// `1×C×H×W` tensor.
    pub fn nchw(c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(vec![1, c, h, w], data)
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
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

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// `(N, C, H, W)` for rank-4 tensors.
    pub fn dims4(&self) -> Option<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Some((n, c, h, w)),
            _ => None,
        }
    }

    /// Number of "features" per batch item: `C·H·W` for rank 4, `cols` for rank 2.
    pub fn features(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        let head = &self.data[..self.data.len().min(PREVIEW)];
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("head", &head)
            .finish()
    }
}
