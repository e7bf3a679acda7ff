use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` tensor with at most four dimensions (N, C, H, W).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 || shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                context: "tensor shape (1 to 4 dims, all >= 1)".into(),
                expected: vec![],
                actual: shape,
            });
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::LengthMismatch {
                context: format!("tensor data for shape {shape:?}"),
                expected: len,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; len]).expect("valid zero tensor shape")
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(vec![n], data).expect("non-empty vector")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per batch entry.
    pub fn row_len(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let r = self.row_len();
        &self.data[n * r..(n + 1) * r]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::ShapeMismatch {
                context: "reshape".into(),
                expected: self.shape,
                actual: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Stacks per-sample tensors (all of identical shape) into a batch.
    pub fn stack(samples: &[&Tensor]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::EmptyDataset("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * samples.len());
        for s in samples {
            if s.shape != first.shape {
                return Err(Error::ShapeMismatch {
                    context: "stack".into(),
                    expected: first.shape.clone(),
                    actual: s.shape.clone(),
                });
            }
            data.extend_from_slice(&s.data);
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(shape, data)
    }
}
