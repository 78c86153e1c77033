use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Whether a forward pass is part of training (dropout active, activations
/// cached for backprop) or inference (deterministic, nothing cached).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` during
/// training so that evaluation is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

/// Per-element multipliers applied by a train-mode pass (0 or `1/(1-rate)`).
/// `None` means every element was kept unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<T>(Option<Vec<T>>);

impl<T: Scalar> DropoutMask<T> {
    pub fn keep_all() -> Self {
        DropoutMask(None)
    }

    pub fn from_scales(scales: Vec<T>) -> Self {
        DropoutMask(Some(scales))
    }

    pub fn scales(&self) -> Option<&[T]> {
        self.0.as_deref()
    }

    /// Number of elements kept, given the element count the mask was made for.
    pub fn kept(&self, len: usize) -> usize {
        match &self.0 {
            None => len,
            Some(s) => s.iter().filter(|&&v| v != T::zero()).count(),
        }
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.0 {
            None => Ok(x.clone()),
            Some(s) if s.len() == x.numel() => {
                Tensor::from_vec(x.dims(), x.data().iter().zip(s).map(|(&a, &m)| a * m).collect())
            }
            Some(s) => Err(Error::shape(format!(
                "dropout mask has {} elements, tensor {}",
                s.len(),
                x.shape()
            ))),
        }
    }
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward<T: Scalar>(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut Prng,
    ) -> Result<(Tensor<T>, DropoutMask<T>)> {
        if mode == Mode::Eval || self.rate == 0.0 {
            return Ok((input.clone(), DropoutMask::keep_all()));
        }
        let keep = 1.0 - self.rate;
        let scale = T::lit(1.0 / keep);
        let scales: Vec<T> = (0..input.numel())
            .map(|_| if rng.bernoulli(keep) { scale } else { T::zero() })
            .collect();
        let mask = DropoutMask::from_scales(scales);
        Ok((mask.apply(input)?, mask))
    }

    pub fn backward<T: Scalar>(mask: &DropoutMask<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        mask.apply(grad_out)
    }
}
