//! 3x3, stride-1, zero "same"-padded 2-D convolution lowered to GEMM via im2col.

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::scalar::{MatRef, Scalar};
use crate::tensor::Tensor;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `[out_ch, in_ch, 3, 3]`
    weights: Tensor<T>,
    /// `[out_ch]`
    bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    /// `None` when the caller did not ask for it (first layer of a network).
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Unfolds one `[C, H, W]` sample into `[C*9, H*W]` columns; row `c*9 + ky*3 + kx`
/// holds the input shifted by `(ky-1, kx-1)` with zeros outside the image.
fn im2col<T: Scalar>(src: &[T], channels: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &src[c * hw..(c + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[(c * TAPS + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src_row[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src_row),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src_row[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into a `[C, H, W]` sample.
fn col2im<T: Scalar>(cols: &[T], channels: usize, h: usize, w: usize, dst: &mut [T]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut dst[c * hw..(c + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[(c * TAPS + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let out = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => out[..w - 1].iter_mut().zip(&src[1..]).for_each(|(o, &g)| *o += g),
                        1 => out.iter_mut().zip(src).for_each(|(o, &g)| *o += g),
                        _ => out[1..].iter_mut().zip(&src[..w - 1]).for_each(|(o, &g)| *o += g),
                    }
                }
            }
        }
    }
}

fn nchw(t: &Tensor<impl Scalar>, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.dims() {
        [b, c, h, w] => Ok((b, c, h, w)),
        _ => Err(Error::shape(format!("{what} must be [B,C,H,W], got {}", t.shape()))),
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let [out_ch, _, kh, kw] = *weights.dims() else {
            return Err(Error::shape(format!(
                "conv weights must be rank 4, got {}",
                weights.shape()
            )));
        };
        if kh != KERNEL || kw != KERNEL {
            return Err(Error::shape(format!("conv kernel must be 3x3, got {kh}x{kw}")));
        }
        if bias.dims() != [out_ch] {
            return Err(Error::shape(format!(
                "conv bias must be [{out_ch}], got {}",
                bias.shape()
            )));
        }
        Ok(Conv2d { weights, bias })
    }

    /// Glorot-uniform kernel (fans include the receptive field), zero bias.
    pub fn init(in_ch: usize, out_ch: usize, rng: &mut Prng) -> Result<Self> {
        let weights = Tensor::glorot_uniform(&[out_ch, in_ch, KERNEL, KERNEL], in_ch * TAPS, out_ch * TAPS, rng)?;
        Conv2d::new(weights, Tensor::zeros(&[out_ch])?)
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
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

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        let dims = nchw(input, "conv input")?;
        if dims.1 != self.in_channels() {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                dims.1
            )));
        }
        Ok(dims)
    }

    /// `[B, C, H, W] -> [B, out_ch, H, W]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, ch, h, w) = self.check_input(input)?;
        let (out_ch, hw, k) = (self.out_channels(), h * w, ch * TAPS);
        let mut cols = vec![T::zero(); k * hw];
        let mut out = vec![T::zero(); batch * out_ch * hw];
        let kernel = MatRef::row_major(self.weights.data(), out_ch, k);
        for (sample, dst) in input
            .data()
            .chunks_exact(ch * hw)
            .zip(out.chunks_exact_mut(out_ch * hw))
        {
            im2col(sample, ch, h, w, &mut cols);
            for (plane, &b) in dst.chunks_exact_mut(hw).zip(self.bias.data()) {
                plane.fill(b);
            }
            T::gemm(T::one(), kernel, MatRef::row_major(&cols, k, hw), T::one(), dst);
        }
        Tensor::from_vec(&[batch, out_ch, h, w], out)
    }

    /// Gradients of `sum(grad_out * forward(input))` w.r.t. input, weights and bias.
    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        self.backward_with(input, grad_out, true)
    }

    pub(crate) fn backward_with(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        want_input: bool,
    ) -> Result<ConvGrads<T>> {
        let (batch, ch, h, w) = self.check_input(input)?;
        let out_ch = self.out_channels();
        if grad_out.dims() != [batch, out_ch, h, w] {
            return Err(Error::shape(format!(
                "conv grad_out must be [{batch}, {out_ch}, {h}, {w}], got {}",
                grad_out.shape()
            )));
        }
        let (hw, k) = (h * w, ch * TAPS);
        let mut cols = vec![T::zero(); k * hw];
        let mut dcols = if want_input {
            vec![T::zero(); k * hw]
        } else {
            Vec::new()
        };
        let mut gw = vec![T::zero(); out_ch * k];
        let mut gb = vec![T::zero(); out_ch];
        let mut gin = if want_input {
            vec![T::zero(); input.numel()]
        } else {
            Vec::new()
        };

        for (b, (sample, g)) in input
            .data()
            .chunks_exact(ch * hw)
            .zip(grad_out.data().chunks_exact(out_ch * hw))
            .enumerate()
        {
            im2col(sample, ch, h, w, &mut cols);
            let g_mat = MatRef::row_major(g, out_ch, hw);
            T::gemm(T::one(), g_mat, MatRef::transposed(&cols, k, hw), T::one(), &mut gw);
            for (acc, plane) in gb.iter_mut().zip(g.chunks_exact(hw)) {
                *acc += plane.iter().copied().sum::<T>();
            }
            if want_input {
                T::gemm(
                    T::one(),
                    MatRef::transposed(self.weights.data(), out_ch, k),
                    g_mat,
                    T::zero(),
                    &mut dcols,
                );
                col2im(&dcols, ch, h, w, &mut gin[b * ch * hw..(b + 1) * ch * hw]);
            }
        }

        Ok(ConvGrads {
            input: if want_input {
                Some(Tensor::from_vec(input.dims(), gin)?)
            } else {
                None
            },
            weights: Tensor::from_vec(self.weights.dims(), gw)?,
            bias: Tensor::from_vec(&[out_ch], gb)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut w = Tensor::<f32>::zeros(&[1, 1, 3, 3]).unwrap();
        w.set(&[0, 0, 1, 1], 1.0).unwrap();
        let conv = Conv2d::new(w, Tensor::zeros(&[1]).unwrap()).unwrap();
        let x = Tensor::from_vec(&[1, 1, 3, 4], (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn bias_broadcasts_over_zero_kernel() {
        let conv = Conv2d::new(
            Tensor::<f32>::zeros(&[2, 3, 3, 3]).unwrap(),
            Tensor::full(&[2], 5.0).unwrap(),
        )
        .unwrap();
        let x = Tensor::full(&[2, 3, 4, 4], 1.5).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.dims(), &[2, 2, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let conv = Conv2d::<f32>::init(2, 4, &mut Prng::new(0)).unwrap();
        let x = Tensor::zeros(&[1, 3, 4, 4]).unwrap();
        assert!(matches!(conv.forward(&x), Err(Error::Shape(_))));
        let x = Tensor::zeros(&[1, 2, 4, 4]).unwrap();
        let bad = Tensor::zeros(&[1, 4, 2, 2]).unwrap();
        assert!(matches!(conv.backward(&x, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn non_square_kernel_rejected() {
        let w = Tensor::<f32>::zeros(&[1, 1, 3, 5]).unwrap();
        assert!(Conv2d::new(w, Tensor::zeros(&[1]).unwrap()).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let conv = Conv2d::<f64>::init(2, 3, &mut Prng::new(1)).unwrap();
        let x = Tensor::full(&[2, 2, 5, 5], 0.3).unwrap();
        let g = conv.backward(&x, &Tensor::zeros(&[2, 3, 5, 5]).unwrap()).unwrap();
        assert!(g.input.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_plane_sum() {
        let mut rng = Prng::new(2);
        let conv = Conv2d::<f64>::init(1, 2, &mut rng).unwrap();
        let x = Tensor::full(&[3, 1, 4, 4], 1.0).unwrap();
        let g: Vec<f64> = (0..3 * 2 * 16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let grad_out = Tensor::from_vec(&[3, 2, 4, 4], g.clone()).unwrap();
        let grads = conv.backward(&x, &grad_out).unwrap();
        for o in 0..2 {
            let expected: f64 = (0..3).flat_map(|b| g[(b * 2 + o) * 16..][..16].to_vec()).sum();
            assert!((grads.bias.data()[o] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c.
        let mut rng = Prng::new(3);
        let (ch, h, w) = (2, 4, 5);
        let x: Vec<f64> = (0..ch * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let c: Vec<f64> = (0..ch * TAPS * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&x, ch, h, w, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&c, ch, h, w, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
