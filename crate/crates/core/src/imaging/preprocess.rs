//! X-ray preprocessing: half-splitting, canvas normalization and bit-depth
//! quantization.

use crate::error::{Error, Result};
use crate::imaging::Image2D;

/// Splits an image into left and right halves at the vertical center line.
///
/// For odd widths the extra column goes to the right half.
pub fn split_xray(image: &Image2D) -> Result<(Image2D, Image2D)> {
    let (w, h) = image.dims();
    if w < 2 {
        return Err(Error::Degenerate(format!(
            "cannot split image of width {w}"
        )));
    }
    let wl = w / 2;
    let wr = w - wl;
    let mut left = Vec::with_capacity(wl * h);
    let mut right = Vec::with_capacity(wr * h);
    for y in 0..h {
        for x in 0..wl {
            left.push(image.at(x, y));
        }
        for x in wl..w {
            right.push(image.at(x, y));
        }
    }
    Ok((
        Image2D::new((wl, h), image.spacing(), image.unit(), left)?,
        Image2D::new((wr, h), image.spacing(), image.unit(), right)?,
    ))
}

/// Bilinear sample with edge clamping, in pixel-center coordinates.
fn sample_bilinear(image: &Image2D, x: f64, y: f64) -> f64 {
    let (w, h) = image.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let v00 = image.at(x0, y0);
    let v10 = image.at(x1, y0);
    let v01 = image.at(x0, y1);
    let v11 = image.at(x1, y1);
    let top = v00 + (v10 - v00) * fx;
    let bot = v01 + (v11 - v01) * fx;
    top + (bot - top) * fy
}

/// Resizes so the image covers the target canvas (scaled by the larger of
/// the two axis ratios), center-aligned, cropping whatever falls outside.
/// Output dims are exactly `(target_w, target_h)`.
pub fn normalize_to_canvas(image: &Image2D, target_w: usize, target_h: usize) -> Result<Image2D> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::Degenerate(format!(
            "target canvas must be non-empty, got {target_w}x{target_h}"
        )));
    }
    let (w, h) = image.dims();
    let scale = (target_w as f64 / w as f64).max(target_h as f64 / h as f64);
    let mut out = Vec::with_capacity(target_w * target_h);
    for j in 0..target_h {
        for i in 0..target_w {
            // Map the output pixel center back into input pixel-center coords.
            let x = (i as f64 + 0.5 - target_w as f64 / 2.0) / scale + w as f64 / 2.0 - 0.5;
            let y = (j as f64 + 0.5 - target_h as f64 / 2.0) / scale + h as f64 / 2.0 - 0.5;
            out.push(sample_bilinear(image, x, y));
        }
    }
    // Output pixel spacing scales inversely with the resize factor.
    let (sx, sy) = image.spacing();
    Image2D::new(
        (target_w, target_h),
        (sx / scale, sy / scale),
        image.unit(),
        out,
    )
}

/// Quantizes values in [0, 1] to `bits` bits: `v -> round(v*(2^bits-1)) / (2^bits-1)`.
pub fn quantize_bits(image: &Image2D, bits: u8) -> Result<Image2D> {
    if bits == 0 || bits > 16 {
        return Err(Error::Range(format!("bits must be in 1..=16, got {bits}")));
    }
    if let Some(i) = image
        .values()
        .iter()
        .position(|&v| !(0.0..=1.0).contains(&v))
    {
        return Err(Error::Range(format!(
            "value {} at linear index {i} outside [0, 1]",
            image.values()[i]
        )));
    }
    let levels = ((1u32 << bits) - 1) as f64;
    let out = image
        .values()
        .iter()
        .map(|&v| (v * levels).round() / levels)
        .collect();
    image.with_values(image.unit(), out)
}
