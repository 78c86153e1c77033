//! Dense row-major N-dimensional arrays.

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::scalar::{MatRef, Scalar};

/// Extents of a tensor, outermost axis first. Never empty, no zero extents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::shape("shape must have at least one axis"));
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::shape(format!("zero extent on axis {axis} of {dims:?}")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::shape(format!("element count of {dims:?} overflows")))?;
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl TryFrom<&[usize]> for Shape {
    type Error = Error;
    fn try_from(dims: &[usize]) -> Result<Self> {
        Shape::new(dims.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let shape = Shape::new(dims.to_vec())?;
        let data = vec![value; shape.numel()];
        Ok(Tensor { shape, data })
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims.to_vec())?;
        if shape.numel() != data.len() {
            return Err(Error::shape(format!("{} values cannot fill shape {shape}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    /// Values i.i.d. uniform on `[-l, l]` with `l = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot_uniform(dims: &[usize], fan_in: usize, fan_out: usize, rng: &mut Prng) -> Result<Self> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::input("glorot fan_in and fan_out must be positive"));
        }
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let shape = Shape::new(dims.to_vec())?;
        let data = (0..shape.numel()).map(|_| T::lit(rng.uniform(-limit, limit))).collect();
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    /// Same data under a different shape with the same element count.
    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims.to_vec())?;
        if shape.numel() != self.data.len() {
            return Err(Error::shape(format!("cannot reshape {} into {shape}", self.shape)));
        }
        Ok(Tensor { shape, data: self.data })
    }

    fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.rank() {
            return None;
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(self.shape.dims()) {
            if i >= d {
                return None;
            }
            off = off * d + i;
        }
        Some(off)
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        self.offset(index).map(|o| self.data[o])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let o = self
            .offset(index)
            .ok_or_else(|| Error::shape(format!("index {index:?} outside {}", self.shape)))?;
        self.data[o] = value;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn finite_or_err(self, op: &str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::input(format!("{op} produced a non-finite value")))
        }
    }

    /// Elementwise `f`; errors if any result is NaN or infinite.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
        .finite_or_err("map")
    }

    /// Elementwise `f(a, b)` over two tensors of identical shape.
    pub fn zip_with(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise shapes differ: {} vs {}",
                self.shape, other.shape
            )));
        }
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
        .finite_or_err("zip_with")
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Self> {
        let (&[m, k], &[k2, n]) = (self.dims(), other.dims()) else {
            return Err(Error::shape(format!(
                "matmul needs rank-2 operands, got {} and {}",
                self.shape, other.shape
            )));
        };
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner extents differ: {} vs {}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            T::one(),
            MatRef::row_major(&self.data, m, k),
            MatRef::row_major(&other.data, k, n),
            T::zero(),
            &mut out,
        );
        Tensor::from_vec(&[m, n], out)
    }

    /// Element-type conversion (e.g. `f32` weights into an `f64` harness).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}
