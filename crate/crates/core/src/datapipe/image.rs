use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// ITU-R BT.601 luma, rounded to the nearest 8-bit level.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

fn to_gray(img: DynamicImage) -> (usize, usize, Vec<u8>) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = if img.color().has_color() {
        img.to_rgb8().pixels().map(|p| luminance(p[0], p[1], p[2])).collect()
    } else {
        img.to_luma8().into_raw()
    };
    (h, w, data)
}

/// Decodes a PNG/JPEG into a `[H, W]` tensor of raw intensities in `0..=255`.
pub fn load_grayscale<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    let img = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let (h, w, data) = to_gray(img);
    Tensor::from_vec(&[h, w], data.into_iter().map(|v| T::lit(v as f64)).collect())
        .map_err(|e| decode_err(e.to_string()))
}

/// Bilinear resize of a `[H, W]` image using the half-pixel-center convention:
/// output pixel `i` samples source coordinate `(i + 0.5) * in / out - 0.5`,
/// clamped to the image.
pub fn resize_bilinear<T: Scalar>(img: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let [in_h, in_w] = *img.dims() else {
        return Err(Error::shape(format!("resize expects [H, W], got {}", img.shape())));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::shape("resize target must be non-empty"));
    }
    if (in_h, in_w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let ys = axis(in_h, out_h);
    let xs = axis(in_w, out_w);
    let src = img.data();
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let at = |y: usize, x: usize| src[y * in_w + x].to_f64_lossy();
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            out.push(T::lit(top * (1.0 - fy) + bottom * fy));
        }
    }
    Tensor::from_vec(&[out_h, out_w], out)
}

/// Maps intensities `0..=255` onto `[0, 1]`.
pub fn normalize<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (lo, hi) = (T::zero(), T::lit(255.0));
    if let Some(bad) = img.data().iter().find(|&&v| !(v >= lo && v <= hi)) {
        return Err(Error::input(format!("intensity {bad} outside [0, 255]")));
    }
    img.map(|v| v / hi)
}

/// Decode, grayscale, resize to `size x size`, scale to `[0, 1]`.
pub fn preprocess<T: Scalar>(path: &Path, size: usize) -> Result<Tensor<T>> {
    let raw = load_grayscale::<T>(path)?;
    normalize(&resize_bilinear(&raw, size, size)?)
}
