use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("{what}: {} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

fn build<T: Scalar>(like: &Tensor<T>, data: Vec<T>) -> Tensor<T> {
    Tensor::from_vec(like.dims(), data).expect("shape preserved")
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    build(input, input.data().iter().map(|&t| t.max(T::zero())).collect())
}

/// Passes the gradient where the activation was strictly positive; the
/// derivative at exactly zero is taken to be 0. `output` may be either the
/// layer's input or its output since both are positive at the same places.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(output, grad_out, "relu backward")?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Ok(build(output, data))
}

pub fn sigmoid_scalar<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    build(input, input.data().iter().map(|&t| sigmoid_scalar(t)).collect())
}

/// `grad * s * (1 - s)` with `s` the forward output.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(output, grad_out, "sigmoid backward")?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Ok(build(output, data))
}
