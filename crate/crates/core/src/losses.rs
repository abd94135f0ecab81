//! Training-objective kernels: adversarial, feature-matching, L1 and
//! gradient-correlation losses, their composite, and the distance-based
//! sample weighting for BMD regression.
//!
//! These are pure array kernels; no networks live here. The differentiable
//! terms (L1, gradient correlation) also return analytic gradients with
//! respect to the output image so external trainers can be checked against
//! a verified reference.

use crate::error::{Error, Result};
use crate::imaging::{Image2D, ImageUnit};
use crate::registration::gradient_image;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs; the
/// adversarial loss is singular at exactly 0 and 1.
const EPS: f64 = 1e-7;

/// Relative weights of the composite decomposition objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub l1: f64,
    pub gc: f64,
    pub fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 100.0,
            gc: 1.0,
            fm: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l1", self.l1), ("gc", self.gc), ("fm", self.fm)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-layer discriminator activations: layer `i` holds `N_i` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    layers: Vec<Vec<f64>>,
}

impl FeatureStack {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Degenerate("feature stack has no layers".into()));
        }
        if layers.iter().any(|l| l.is_empty()) {
            return Err(Error::Degenerate("feature stack has an empty layer".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }
}

/// Adversarial log-loss: `mean(log d_real) + mean(log(1 - d_fake))`.
pub fn gan_loss(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Degenerate("gan_loss needs non-empty inputs".into()));
    }
    let clamp = |v: f64| v.clamp(EPS, 1.0 - EPS);
    let real: f64 = d_real.iter().map(|&v| clamp(v).ln()).sum::<f64>() / d_real.len() as f64;
    let fake: f64 =
        d_fake.iter().map(|&v| (1.0 - clamp(v)).ln()).sum::<f64>() / d_fake.len() as f64;
    Ok(real + fake)
}

/// Feature-matching loss: `sum_i (1/N_i) * ||real_i - fake_i||_1`.
pub fn fm_loss(real: &FeatureStack, fake: &FeatureStack) -> Result<f64> {
    if real.layers.len() != fake.layers.len() {
        return Err(Error::DimMismatch(format!(
            "feature stacks have {} vs {} layers",
            real.layers.len(),
            fake.layers.len()
        )));
    }
    let mut total = 0.0;
    for (i, (r, f)) in real.layers.iter().zip(&fake.layers).enumerate() {
        if r.len() != f.len() {
            return Err(Error::DimMismatch(format!(
                "layer {i} has {} vs {} elements",
                r.len(),
                f.len()
            )));
        }
        let l1: f64 = r.iter().zip(f).map(|(a, b)| (a - b).abs()).sum();
        total += l1 / r.len() as f64;
    }
    Ok(total)
}

fn check_same_dims(target: &Image2D, output: &Image2D) -> Result<()> {
    if target.dims() != output.dims() {
        return Err(Error::DimMismatch(format!(
            "target {:?} vs output {:?}",
            target.dims(),
            output.dims()
        )));
    }
    Ok(())
}

/// Mean absolute error and its gradient with respect to `output`:
/// `-sign(t - o) / N` per pixel, with `sign(0) = 0`.
pub fn l1_loss(target: &Image2D, output: &Image2D) -> Result<(f64, Image2D)> {
    check_same_dims(target, output)?;
    let n = target.values().len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(target.values().len());
    for (&t, &o) in target.values().iter().zip(output.values()) {
        let diff = t - o;
        value += diff.abs();
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad.push(-sign / n);
    }
    Ok((
        value / n,
        output.with_values(ImageUnit::Dimensionless, grad)?,
    ))
}

/// Centered statistics used by the NCC gradient.
struct Centered {
    centered: Vec<f64>,
    norm: f64,
}

fn center(values: &[f64]) -> Result<Centered> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVariance(
            "gradient channel has zero variance".into(),
        ));
    }
    Ok(Centered { centered, norm })
}

/// NCC of fixed `a` against `b`, plus the gradient of NCC w.r.t. `b`:
/// `(a_hat/|a_hat| - ncc * b_hat/|b_hat|) / |b_hat|`.
fn ncc_with_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let ca = center(a)?;
    let cb = center(b)?;
    let dot: f64 = ca.centered.iter().zip(&cb.centered).map(|(x, y)| x * y).sum();
    let ncc = dot / (ca.norm * cb.norm);
    let grad = ca
        .centered
        .iter()
        .zip(&cb.centered)
        .map(|(x, y)| (x / ca.norm - ncc * y / cb.norm) / cb.norm)
        .collect();
    Ok((ncc, grad))
}

/// Scatters an upstream gradient through the adjoint of the difference
/// stencil used by [`gradient_image`]. `horizontal` selects the x stencil.
fn stencil_adjoint(upstream: &[f64], w: usize, h: usize, horizontal: bool, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let g = upstream[x + w * y];
            if g == 0.0 {
                continue;
            }
            if horizontal {
                if x == 0 {
                    out[1 + w * y] += g;
                    out[w * y] -= g;
                } else if x == w - 1 {
                    out[(w - 1) + w * y] += g;
                    out[(w - 2) + w * y] -= g;
                } else {
                    out[(x + 1) + w * y] += g / 2.0;
                    out[(x - 1) + w * y] -= g / 2.0;
                }
            } else if y == 0 {
                out[x + w] += g;
                out[x] -= g;
            } else if y == h - 1 {
                out[x + w * (h - 1)] += g;
                out[x + w * (h - 2)] -= g;
            } else {
                out[x + w * (y + 1)] += g / 2.0;
                out[x + w * (y - 1)] -= g / 2.0;
            }
        }
    }
}

/// Gradient-correlation loss `-GC(target, output)` (perfect alignment gives
/// -2) and its analytic gradient with respect to `output`, assembled by the
/// chain rule through NCC and the difference stencil.
pub fn gc_loss(target: &Image2D, output: &Image2D) -> Result<(f64, Image2D)> {
    check_same_dims(target, output)?;
    let (w, h) = output.dims();
    let (tx, ty) = gradient_image(target)?;
    let (ox, oy) = gradient_image(output)?;
    let (ncc_x, dx) = ncc_with_grad(tx.values(), ox.values())?;
    let (ncc_y, dy) = ncc_with_grad(ty.values(), oy.values())?;
    let mut grad = vec![0.0; w * h];
    // loss = -(ncc_x + ncc_y), so the upstream sign flips here.
    let neg_dx: Vec<f64> = dx.iter().map(|v| -v).collect();
    let neg_dy: Vec<f64> = dy.iter().map(|v| -v).collect();
    stencil_adjoint(&neg_dx, w, h, true, &mut grad);
    stencil_adjoint(&neg_dy, w, h, false, &mut grad);
    Ok((
        -(ncc_x + ncc_y),
        output.with_values(ImageUnit::Dimensionless, grad)?,
    ))
}

/// Composite decomposition objective over the three discriminator scales:
/// `w.l1 * L1 + w.gc * GCloss + w.fm * sum_k FM_k`.
pub fn dec_loss(
    target: &Image2D,
    output: &Image2D,
    real_feats: &[FeatureStack],
    fake_feats: &[FeatureStack],
    weights: &LossWeights,
) -> Result<f64> {
    weights.validate()?;
    if real_feats.len() != 3 || fake_feats.len() != 3 {
        return Err(Error::DimMismatch(format!(
            "expected 3 feature-stack pairs, got {} real / {} fake",
            real_feats.len(),
            fake_feats.len()
        )));
    }
    let (l1, _) = l1_loss(target, output)?;
    let (gc, _) = gc_loss(target, output)?;
    let mut fm_total = 0.0;
    for (r, f) in real_feats.iter().zip(fake_feats) {
        fm_total += fm_loss(r, f)?;
    }
    Ok(weights.l1 * l1 + weights.gc * gc + weights.fm * fm_total)
}

/// Distance-based sample weights for unbalanced regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights {
    /// One weight per sample, in [0.5, 1.5].
    pub weights: Vec<f64>,
    /// True when all distances were equal and uniform weights were returned.
    pub degenerate: bool,
}

/// Computes `w_i = 1.5 - (d_i - d_min)/(d_max - d_min)` with
/// `d_i = |y_i - mean(y)|`. When all distances coincide the weighting is
/// undefined; uniform weights of 1.0 are returned with the degenerate flag
/// set.
pub fn sample_weights(y_all: &[f64]) -> Result<SampleWeights> {
    if y_all.len() < 2 {
        return Err(Error::Degenerate(format!(
            "sample weighting needs >= 2 samples, got {}",
            y_all.len()
        )));
    }
    if y_all.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("BMD values must be finite".into()));
    }
    let mean = y_all.iter().sum::<f64>() / y_all.len() as f64;
    let d: Vec<f64> = y_all.iter().map(|y| (y - mean).abs()).collect();
    let d_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let d_max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if d_max == d_min {
        return Ok(SampleWeights {
            weights: vec![1.0; y_all.len()],
            degenerate: true,
        });
    }
    let weights = d
        .iter()
        .map(|di| 1.5 - (di - d_min) / (d_max - d_min))
        .collect();
    Ok(SampleWeights {
        weights,
        degenerate: false,
    })
}

/// Weighted L1 regression objective: `mean_i w_i * |y_i - y_pred_i|`.
pub fn weighted_regression_loss(y_true: &[f64], y_pred: &[f64], weights: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.len() != weights.len() {
        return Err(Error::DimMismatch(format!(
            "lengths differ: {} true, {} predicted, {} weights",
            y_true.len(),
            y_pred.len(),
            weights.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Degenerate("regression loss over no samples".into()));
    }
    let total: f64 = y_true
        .iter()
        .zip(y_pred)
        .zip(weights)
        .map(|((t, p), w)| w * (t - p).abs())
        .sum();
    Ok(total / y_true.len() as f64)
}
