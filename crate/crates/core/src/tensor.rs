//! Dense n-dimensional `f32` arrays in row-major order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How to populate a freshly created tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Constant(f32),
    /// Uniform samples in `[low, high)`, reproducible from `seed`.
    Uniform { low: f32, high: f32, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("shape must have at least one dimension".into()));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::InvalidShape(format!(
            "dimension {pos} of {shape:?} is zero"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape(format!("{shape:?} overflows usize")))
}

impl Tensor {
    pub fn create(shape: &[usize], fill: Fill) -> Result<Self> {
        let len = check_shape(shape)?;
        let data = match fill {
            Fill::Constant(v) => vec![v; len],
            Fill::Uniform { low, high, seed } => {
                if !(low < high) || !low.is_finite() || !high.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "uniform fill needs finite low < high, got [{low}, {high})"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..len).map(|_| rng.random_range(low..high)).collect()
            }
        };
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::create(shape, Fill::Constant(0.0))
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {len} values but {} were supplied",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// A zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    /// Flat offset of a multi-dimensional index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::InvalidShape(format!(
                "index {index:?} has rank {} but tensor has rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::InvalidShape(format!(
                    "index {index:?} out of bounds for shape {:?}",
                    self.shape
                )));
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<f32> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::InvalidShape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Coordinate of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn all_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    pub fn sum(&self) -> f32 {
        self.data.iter().sum()
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// `self += other`, used for gradient accumulation.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f32) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn expect_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::InvalidShape(format!(
                "{what}: shape {:?} does not match {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}
