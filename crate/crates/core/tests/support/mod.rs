//! Shared fixtures and independent oracle implementations for the
//! acceptance suite. Oracles are written from first principles and must not
//! call into the library paths they check.

use bmdkit::imaging::{Image2D, ImageUnit, Volume3D, VolumeUnit};

/// Small deterministic generator (splitmix64) so the suite needs no
/// external randomness.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.uniform() * (hi - lo)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Random smooth image: a mixture of low-frequency sinusoids.
pub fn smooth_image(w: usize, h: usize, rng: &mut TestRng) -> Image2D {
    let terms: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.range(0.5, 1.5),
                rng.range(0.3, 2.0),
                rng.range(0.3, 2.0),
                rng.range(0.0, std::f64::consts::TAU),
            )
        })
        .collect();
    let values = (0..w * h)
        .map(|i| {
            let x = (i % w) as f64 / w as f64;
            let y = (i / w) as f64 / h as f64;
            terms
                .iter()
                .map(|(a, fx, fy, phase)| {
                    a * (std::f64::consts::TAU * (fx * x + fy * y) + phase).sin()
                })
                .sum()
        })
        .collect();
    Image2D::new((w, h), (1.0, 1.0), ImageUnit::Dimensionless, values).unwrap()
}

/// Central finite differences of a scalar functional of the image.
pub fn fd_gradient<F: Fn(&Image2D) -> f64>(image: &Image2D, f: F, h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(image.values().len());
    for i in 0..image.values().len() {
        let mut plus = image.values().to_vec();
        let mut minus = image.values().to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = f(&image.with_values(image.unit(), plus).unwrap());
        let fm = f(&image.with_values(image.unit(), minus).unwrap());
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// Supersampled solid sphere of uniform density, for chord-length checks.
pub fn sphere_volume(n: usize, spacing: f64, radius: f64, density: f64) -> Volume3D {
    let c = (n as f64 - 1.0) / 2.0 * spacing;
    let mut values = vec![0.0; n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let mut inside = 0u8;
                for s in 0..8u8 {
                    let px = i as f64 * spacing + ((s & 1) as f64 - 0.5) * spacing / 2.0;
                    let py = j as f64 * spacing + (((s >> 1) & 1) as f64 - 0.5) * spacing / 2.0;
                    let pz = k as f64 * spacing + (((s >> 2) & 1) as f64 - 0.5) * spacing / 2.0;
                    let r2 = (px - c).powi(2) + (py - c).powi(2) + (pz - c).powi(2);
                    if r2 <= radius * radius {
                        inside += 1;
                    }
                }
                values[i + n * (j + n * k)] = density * inside as f64 / 8.0;
            }
        }
    }
    Volume3D::new(
        (n, n, n),
        (spacing, spacing, spacing),
        (0.0, 0.0, 0.0),
        VolumeUnit::DensityMgCm3,
        values,
    )
    .unwrap()
}

// ---------------------------------------------------------------------
// Brute-force metric oracles.
// ---------------------------------------------------------------------

pub fn mean_oracle(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

pub fn mae_oracle(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Residual standard error of the least-squares fit of `gt` on `pred`,
/// solved through the normal equations.
pub fn see_oracle(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let sx: f64 = pred.iter().sum();
    let sy: f64 = gt.iter().sum();
    let sxx: f64 = pred.iter().map(|x| x * x).sum();
    let sxy: f64 = pred.iter().zip(gt).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let ssr: f64 = pred
        .iter()
        .zip(gt)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    (ssr / (n - 2.0)).sqrt()
}

/// ICC(2,1) built from an explicit two-way ANOVA table.
pub fn icc_oracle(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    let k = 2.0;
    let table: Vec<[f64; 2]> = pred.iter().zip(gt).map(|(&p, &g)| [p, g]).collect();
    let grand = table.iter().flatten().sum::<f64>() / (n as f64 * k);
    let row_means: Vec<f64> = table.iter().map(|r| (r[0] + r[1]) / 2.0).collect();
    let col_means: Vec<f64> = (0..2)
        .map(|j| table.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let ssr = k * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ssc = n as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut sse = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            sse += (v - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let msr = ssr / (n as f64 - 1.0);
    let msc = ssc / (k - 1.0);
    let mse = sse / ((n as f64 - 1.0) * (k - 1.0));
    (msr - mse) / (msr + (k - 1.0) * mse + (k / n as f64) * (msc - mse))
}

pub fn psnr_oracle(gt: &[f64], pred: &[f64]) -> f64 {
    let peak = gt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mse = gt
        .iter()
        .zip(pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / gt.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Mean multi-threshold Dice via explicit index sets.
pub fn dice_oracle(gt: &[f64], pred: &[f64], thresholds: &[f64]) -> f64 {
    let mut dices = Vec::new();
    for &t in thresholds {
        let a: std::collections::HashSet<usize> =
            (0..gt.len()).filter(|&i| gt[i] >= t).collect();
        let b: std::collections::HashSet<usize> =
            (0..pred.len()).filter(|&i| pred[i] >= t).collect();
        if a.is_empty() && b.is_empty() {
            continue;
        }
        let inter = a.intersection(&b).count();
        dices.push(2.0 * inter as f64 / (a.len() + b.len()) as f64);
    }
    dices.iter().sum::<f64>() / dices.len() as f64
}

pub struct BlandAltmanOracle {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub lower: f64,
    pub upper: f64,
    pub outliers: Vec<bool>,
}

pub fn bland_altman_oracle(pred: &[f64], gt: &[f64]) -> BlandAltmanOracle {
    let diffs: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| p - g).collect();
    let mean_diff = mean_oracle(&diffs);
    let sd_diff = (diffs
        .iter()
        .map(|d| (d - mean_diff).powi(2))
        .sum::<f64>()
        / (diffs.len() as f64 - 1.0))
        .sqrt();
    let lower = mean_diff - 1.96 * sd_diff;
    let upper = mean_diff + 1.96 * sd_diff;
    let outliers = diffs.iter().map(|&d| d < lower || d > upper).collect();
    BlandAltmanOracle {
        mean_diff,
        sd_diff,
        lower,
        upper,
        outliers,
    }
}
