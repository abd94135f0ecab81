//! BMD derivation from a proximal-femur DRR: thresholded mean intensity,
//! threshold tuning against ground truth, linear fitting and prediction.
//!
//! Pixels at or above the threshold define the measured region; their mean
//! intensity is linearly mapped to BMD. The threshold is tuned by sweeping a
//! grid and keeping the value that maximizes the Pearson correlation between
//! the resulting means and ground-truth BMD.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::Image2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmdTarget {
    /// Areal BMD in g/cm^2.
    Dxa,
    /// Volumetric BMD in mg/cm^3.
    Qct,
}

impl BmdTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            BmdTarget::Dxa => "dxa",
            BmdTarget::Qct => "qct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dxa" => Some(BmdTarget::Dxa),
            "qct" => Some(BmdTarget::Qct),
            _ => None,
        }
    }
}

/// Threshold plus linear map from DRR mean intensity to BMD.
#[derive(Debug, Clone, PartialEq)]
pub struct BmdCalibration {
    pub target: BmdTarget,
    pub threshold: f64,
    pub slope: f64,
    pub intercept: f64,
    pub pcc_at_fit: f64,
}

/// Mean of the pixels with intensity >= `t`, plus how many there are.
pub fn drr_mean_intensity(drr: &Image2D, t: f64) -> Result<(f64, usize)> {
    if !(t >= 0.0) {
        return Err(Error::Range(format!("threshold must be >= 0, got {t}")));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &v in drr.values() {
        if v >= t {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyRegion(format!(
            "no pixels at or above threshold {t}"
        )));
    }
    Ok((sum / count as f64, count))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// One grid point of the tuning sweep; `pcc` is `None` where the threshold
/// was invalid (an empty region for at least one case, or zero variance).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub pcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub points: Vec<ThresholdPoint>,
    pub best_threshold: f64,
    pub best_pcc: f64,
}

/// Default tuning grid: 64 evenly spaced thresholds from 0 to the 99th
/// percentile (nearest-rank) of the pooled DRR intensities.
pub fn default_threshold_grid(drrs: &[Image2D]) -> Vec<f64> {
    let mut pooled: Vec<f64> = drrs.iter().flat_map(|d| d.values().iter().cloned()).collect();
    if pooled.is_empty() {
        return Vec::new();
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((0.99 * pooled.len() as f64).ceil() as usize).clamp(1, pooled.len());
    let p99 = pooled[rank - 1];
    let n = 64;
    (0..n).map(|i| p99 * i as f64 / (n - 1) as f64).collect()
}

/// Sweeps `grid`, computing the PCC between per-case thresholded means and
/// `gt_bmd` at each threshold. Returns the full curve and the argmax
/// threshold, breaking ties toward the smallest threshold.
pub fn tune_threshold(drrs: &[Image2D], gt_bmd: &[f64], grid: &[f64]) -> Result<ThresholdCurve> {
    if drrs.len() != gt_bmd.len() {
        return Err(Error::DimMismatch(format!(
            "{} DRRs vs {} ground-truth values",
            drrs.len(),
            gt_bmd.len()
        )));
    }
    if drrs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "threshold tuning needs >= 3 cases, got {}",
            drrs.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Degenerate("threshold grid is empty".into()));
    }
    let evaluate = |t: f64| -> Option<f64> {
        let mut means = Vec::with_capacity(drrs.len());
        for drr in drrs {
            match drr_mean_intensity(drr, t) {
                Ok((m, _)) => means.push(m),
                Err(_) => return None,
            }
        }
        pearson(&means, gt_bmd)
    };
    // Deterministic: grid points are independent; results keep grid order.
    let points: Vec<ThresholdPoint> = {
        use rayon::prelude::*;
        grid.par_iter()
            .map(|&t| ThresholdPoint {
                threshold: t,
                pcc: evaluate(t),
            })
            .collect()
    };
    let mut best: Option<(f64, f64)> = None;
    for p in &points {
        if let Some(pcc) = p.pcc {
            let better = match best {
                None => true,
                Some((_, best_pcc)) => pcc > best_pcc,
            };
            if better {
                best = Some((p.threshold, pcc));
            }
        }
    }
    let (best_threshold, best_pcc) = best.ok_or_else(|| {
        Error::Degenerate("no threshold in the grid produced a valid correlation".into())
    })?;
    Ok(ThresholdCurve {
        points,
        best_threshold,
        best_pcc,
    })
}

/// Least-squares line from thresholded means to ground-truth BMD.
pub fn fit_bmd_line(
    means: &[f64],
    gt_bmd: &[f64],
    threshold: f64,
    target: BmdTarget,
) -> Result<BmdCalibration> {
    if means.len() != gt_bmd.len() {
        return Err(Error::DimMismatch(format!(
            "{} means vs {} ground-truth values",
            means.len(),
            gt_bmd.len()
        )));
    }
    if means.len() < 2 {
        return Err(Error::Degenerate(format!(
            "line fit needs >= 2 samples, got {}",
            means.len()
        )));
    }
    if !(threshold >= 0.0) {
        return Err(Error::Range(format!(
            "threshold must be >= 0, got {threshold}"
        )));
    }
    let n = means.len() as f64;
    let mx = means.iter().sum::<f64>() / n;
    let my = gt_bmd.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in means.iter().zip(gt_bmd) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::RankDeficient("all means are identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let pcc_at_fit = pearson(means, gt_bmd).unwrap_or(0.0);
    Ok(BmdCalibration {
        target,
        threshold,
        slope,
        intercept,
        pcc_at_fit,
    })
}

/// Applies a calibration to one DRR: `slope * mean_{>=t} + intercept`.
pub fn predict_bmd(drr: &Image2D, cal: &BmdCalibration) -> Result<f64> {
    let (mean, _) = drr_mean_intensity(drr, cal.threshold)?;
    Ok(cal.slope * mean + cal.intercept)
}

impl BmdCalibration {
    /// Persists as `key: value` text.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = format!(
            "target: {}\nthreshold: {}\nslope: {}\nintercept: {}\npcc_at_fit: {}\n",
            self.target.as_str(),
            self.threshold,
            self.slope,
            self.intercept,
            self.pcc_at_fit
        );
        crate::imaging::atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut target = None;
        let mut threshold = None;
        let mut slope = None;
        let mut intercept = None;
        let mut pcc_at_fit = None;
        let perr = |key: &str, msg: String| Error::Parse {
            path: path.to_path_buf(),
            key: key.into(),
            message: msg,
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| perr(line, "expected `key: value`".into()))?;
            let key = key.trim();
            let value = value.trim();
            let parse_f =
                |k: &str, v: &str| v.parse::<f64>().map_err(|e| perr(k, e.to_string()));
            match key {
                "target" => {
                    target = Some(
                        BmdTarget::parse(value)
                            .ok_or_else(|| perr("target", format!("unknown target `{value}`")))?,
                    )
                }
                "threshold" => threshold = Some(parse_f("threshold", value)?),
                "slope" => slope = Some(parse_f("slope", value)?),
                "intercept" => intercept = Some(parse_f("intercept", value)?),
                "pcc_at_fit" => pcc_at_fit = Some(parse_f("pcc_at_fit", value)?),
                other => return Err(perr(other, "unknown calibration key".into())),
            }
        }
        Ok(Self {
            target: target.ok_or_else(|| perr("target", "missing required key".into()))?,
            threshold: threshold.ok_or_else(|| perr("threshold", "missing required key".into()))?,
            slope: slope.ok_or_else(|| perr("slope", "missing required key".into()))?,
            intercept: intercept
                .ok_or_else(|| perr("intercept", "missing required key".into()))?,
            pcc_at_fit: pcc_at_fit
                .ok_or_else(|| perr("pcc_at_fit", "missing required key".into()))?,
        })
    }
}
