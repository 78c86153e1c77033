use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::scalar::{MatRef, Scalar};
use crate::tensor::Tensor;

/// Fully connected layer: `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    weights: Tensor<T>,
    bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let [_, out] = *weights.dims() else {
            return Err(Error::shape(format!(
                "dense weights must be rank 2, got {}",
                weights.shape()
            )));
        };
        if bias.dims() != [out] {
            return Err(Error::shape(format!(
                "dense bias must be [{out}], got {}",
                bias.shape()
            )));
        }
        Ok(Dense { weights, bias })
    }

    pub fn init(in_features: usize, out_features: usize, rng: &mut Prng) -> Result<Self> {
        let weights = Tensor::glorot_uniform(&[in_features, out_features], in_features, out_features, rng)?;
        Dense::new(weights, Tensor::zeros(&[out_features])?)
    }

    pub fn in_features(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weights, &mut self.bias]
    }

    fn batch_of(&self, input: &Tensor<T>) -> Result<usize> {
        match *input.dims() {
            [b, f] if f == self.in_features() => Ok(b),
            _ => Err(Error::shape(format!(
                "dense expects [B, {}], got {}",
                self.in_features(),
                input.shape()
            ))),
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.batch_of(input)?;
        let (f, o) = (self.in_features(), self.out_features());
        let mut out: Vec<T> = self.bias.data().iter().copied().cycle().take(batch * o).collect();
        T::gemm(
            T::one(),
            MatRef::row_major(input.data(), batch, f),
            MatRef::row_major(self.weights.data(), f, o),
            T::one(),
            &mut out,
        );
        Tensor::from_vec(&[batch, o], out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
        let batch = self.batch_of(input)?;
        let (f, o) = (self.in_features(), self.out_features());
        if grad_out.dims() != [batch, o] {
            return Err(Error::shape(format!(
                "dense grad_out must be [{batch}, {o}], got {}",
                grad_out.shape()
            )));
        }
        let g = MatRef::row_major(grad_out.data(), batch, o);
        let mut gw = vec![T::zero(); f * o];
        T::gemm(
            T::one(),
            MatRef::transposed(input.data(), batch, f),
            g,
            T::zero(),
            &mut gw,
        );
        let mut gx = vec![T::zero(); batch * f];
        T::gemm(
            T::one(),
            g,
            MatRef::transposed(self.weights.data(), f, o),
            T::zero(),
            &mut gx,
        );
        let mut gb = vec![T::zero(); o];
        for row in grad_out.data().chunks_exact(o) {
            gb.iter_mut().zip(row).for_each(|(acc, &v)| *acc += v);
        }
        Ok(DenseGrads {
            input: Tensor::from_vec(&[batch, f], gx)?,
            weights: Tensor::from_vec(&[f, o], gw)?,
            bias: Tensor::from_vec(&[o], gb)?,
        })
    }
}
