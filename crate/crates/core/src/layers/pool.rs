use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Winner of each 2x2 window, recorded by the forward pass for gradient routing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_dims: [usize; 4],
    /// Position inside the window: `dy * 2 + dx`.
    winners: Vec<u8>,
}

impl PoolIndices {
    pub fn input_dims(&self) -> [usize; 4] {
        self.input_dims
    }

    /// Flat row-major input offset of every output element's winner.
    pub fn winner_offsets(&self) -> impl Iterator<Item = usize> + '_ {
        let [_, _, h, w] = self.input_dims;
        let (oh, ow) = (h / 2, w / 2);
        self.winners.iter().enumerate().map(move |(i, &k)| {
            let plane = i / (oh * ow);
            let (y, x) = ((i % (oh * ow)) / ow, i % ow);
            plane * h * w + (2 * y + (k as usize >> 1)) * w + 2 * x + (k as usize & 1)
        })
    }
}

/// Non-overlapping 2x2 max pooling, `[B, C, H, W] -> [B, C, H/2, W/2]`.
/// Ties go to the first maximum in row-major window order.
pub fn maxpool2x2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let [b, c, h, w] = *input.dims() else {
        return Err(Error::shape(format!(
            "maxpool input must be [B,C,H,W], got {}",
            input.shape()
        )));
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("maxpool needs even spatial extents, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut winners = Vec::with_capacity(b * c * oh * ow);
    for plane in input.data().chunks_exact(h * w) {
        for y in 0..oh {
            let top = &plane[2 * y * w..][..w];
            let bottom = &plane[(2 * y + 1) * w..][..w];
            for x in 0..ow {
                let window = [top[2 * x], top[2 * x + 1], bottom[2 * x], bottom[2 * x + 1]];
                let mut best = 0;
                for k in 1..4 {
                    if window[k] > window[best] {
                        best = k;
                    }
                }
                out.push(window[best]);
                winners.push(best as u8);
            }
        }
    }
    let indices = PoolIndices {
        input_dims: [b, c, h, w],
        winners,
    };
    Ok((Tensor::from_vec(&[b, c, oh, ow], out)?, indices))
}

/// Routes each upstream gradient to its window's winner; every other position gets 0.
pub fn maxpool2x2_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = indices.input_dims;
    if grad_out.dims() != [b, c, h / 2, w / 2] {
        return Err(Error::shape(format!(
            "maxpool grad_out must be [{b}, {c}, {}, {}], got {}",
            h / 2,
            w / 2,
            grad_out.shape()
        )));
    }
    let mut grad_in = vec![T::zero(); b * c * h * w];
    for (offset, &g) in indices.winner_offsets().zip(grad_out.data()) {
        grad_in[offset] = g;
    }
    Tensor::from_vec(&[b, c, h, w], grad_in)
}
