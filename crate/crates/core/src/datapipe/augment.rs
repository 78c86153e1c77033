//! Random affine augmentation: rotation, isotropic zoom, translation and
//! horizontal flip composed into a single bilinear resampling pass.
//! Pixels mapped from outside the source take the nearest edge value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    /// Rotation angle drawn from `U(-rotation_deg, +rotation_deg)`.
    pub rotation_deg: f64,
    /// Scale drawn from `U(1 - zoom, 1 + zoom)`; above 1 magnifies.
    pub zoom: f64,
    /// Translations drawn from `U(-f, +f)` times the image width / height.
    pub width_shift: f64,
    pub height_shift: f64,
    pub flip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_deg: 30.0,
            zoom: 0.2,
            width_shift: 0.1,
            height_shift: 0.1,
            flip_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    /// No-op policy: every sampled transform is the identity.
    pub fn none() -> Self {
        AugmentConfig {
            rotation_deg: 0.0,
            zoom: 0.0,
            width_shift: 0.0,
            height_shift: 0.0,
            flip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| (0.0..1.0).contains(&v);
        let ok = (0.0..=180.0).contains(&self.rotation_deg)
            && frac(self.zoom)
            && frac(self.width_shift)
            && frac(self.height_shift)
            && (0.0..=1.0).contains(&self.flip_prob);
        if !ok {
            return Err(Error::Config(format!("invalid augmentation settings {self:?}")));
        }
        Ok(())
    }
}

/// One concrete transform. Shifts are in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    pub zoom: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub flip: bool,
}

impl AffineParams {
    pub fn identity() -> Self {
        AffineParams {
            rotation_deg: 0.0,
            zoom: 1.0,
            shift_x: 0.0,
            shift_y: 0.0,
            flip: false,
        }
    }

    /// Draws rotation, zoom, x shift, y shift and flip, in that order.
    pub fn sample(cfg: &AugmentConfig, height: usize, width: usize, rng: &mut Prng) -> Self {
        let r = cfg.rotation_deg;
        let rotation_deg = rng.uniform(-r, r);
        let zoom = rng.uniform(1.0 - cfg.zoom, 1.0 + cfg.zoom);
        let shift_x = rng.uniform(-cfg.width_shift, cfg.width_shift) * width as f64;
        let shift_y = rng.uniform(-cfg.height_shift, cfg.height_shift) * height as f64;
        let flip = rng.bernoulli(cfg.flip_prob);
        AffineParams {
            rotation_deg,
            zoom,
            shift_x,
            shift_y,
            flip,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

fn image_dims<T: Scalar>(img: &Tensor<T>) -> Result<(usize, usize)> {
    match *img.dims() {
        [h, w] => Ok((h, w)),
        _ => Err(Error::shape(format!(
            "augmentation expects [H, W], got {}",
            img.shape()
        ))),
    }
}

pub fn flip_horizontal<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, w) = image_dims(img)?;
    let data = img
        .data()
        .chunks_exact(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    Tensor::from_vec(img.dims(), data)
}

/// Applies `params` about the image center. The forward map is
/// `q = c + zoom * R(angle) * (p - c) + shift`, followed by an optional
/// mirror; each output pixel is pulled back through the inverse and sampled
/// bilinearly with edge clamping.
pub fn warp<T: Scalar>(img: &Tensor<T>, params: &AffineParams) -> Result<Tensor<T>> {
    let (h, w) = image_dims(img)?;
    if params.is_identity() {
        return Ok(img.clone());
    }
    if params.zoom.is_nan() || params.zoom <= 0.0 {
        return Err(Error::input(format!("zoom must be positive, got {}", params.zoom)));
    }
    let (sin, cos) = params.rotation_deg.to_radians().sin_cos();
    let inv_zoom = 1.0 / params.zoom;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    let src = img.data();
    let at = |y: usize, x: usize| src[y * w + x].to_f64_lossy();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let qx = if params.flip { max_x - x as f64 } else { x as f64 };
            let dx = qx - cx - params.shift_x;
            let dy = y as f64 - cy - params.shift_y;
            let sx = (cx + (cos * dx + sin * dy) * inv_zoom).clamp(0.0, max_x);
            let sy = (cy + (-sin * dx + cos * dy) * inv_zoom).clamp(0.0, max_y);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            out.push(T::lit(top * (1.0 - fy) + bottom * fy));
        }
    }
    Tensor::from_vec(&[h, w], out)
}

/// Samples a transform from `cfg` and applies it.
pub fn augment<T: Scalar>(img: &Tensor<T>, cfg: &AugmentConfig, rng: &mut Prng) -> Result<Tensor<T>> {
    let (h, w) = image_dims(img)?;
    warp(img, &AffineParams::sample(cfg, h, w, rng))
}
