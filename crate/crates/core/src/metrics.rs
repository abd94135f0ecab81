//! Evaluation statistics for BMD estimation and DRR decomposition: Pearson
//! correlation, MAE, standard error of estimate, ICC(2,1), RMS-CV across
//! poses, PSNR, multi-threshold Dice and Bland-Altman agreement analysis.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::imaging::Image2D;

/// One prediction/ground-truth pair, keyed by case and pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRecord {
    pub case_id: String,
    pub pose: String,
    pub predicted: f64,
    pub ground_truth: f64,
}

/// A validated series of paired measurements; (case_id, pose) keys are
/// unique and all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    records: Vec<PairedRecord>,
}

impl PairedSeries {
    pub fn new(records: Vec<PairedRecord>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &records {
            if !r.predicted.is_finite() || !r.ground_truth.is_finite() {
                return Err(Error::Invariant(format!(
                    "non-finite value for case `{}` pose `{}`",
                    r.case_id, r.pose
                )));
            }
            if !seen.insert((r.case_id.clone(), r.pose.clone())) {
                return Err(Error::Invariant(format!(
                    "duplicate record for case `{}` pose `{}`",
                    r.case_id, r.pose
                )));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[PairedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn predicted(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.predicted).collect()
    }

    pub fn ground_truth(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ground_truth).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub pcc: f64,
    pub mae: f64,
    /// Residual standard error of the least-squares fit of ground truth on
    /// prediction, with an n-2 denominator.
    pub see: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let ma = mean(a);
    let mb = mean(b);
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance(
            "correlation undefined for a constant series".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// PCC, MAE and SEE of predictions against ground truth.
pub fn regression_metrics(series: &PairedSeries) -> Result<RegressionMetrics> {
    let n = series.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "regression metrics need >= 3 records, got {n}"
        )));
    }
    let pred = series.predicted();
    let gt = series.ground_truth();
    let pcc = pearson(&pred, &gt)?;
    let mae = pred
        .iter()
        .zip(&gt)
        .map(|(p, g)| (p - g).abs())
        .sum::<f64>()
        / n as f64;
    // Least squares of gt on pred, residual standard error.
    let mp = mean(&pred);
    let mg = mean(&gt);
    let sxx: f64 = pred.iter().map(|p| (p - mp) * (p - mp)).sum();
    let sxy: f64 = pred.iter().zip(&gt).map(|(p, g)| (p - mp) * (g - mg)).sum();
    let slope = sxy / sxx;
    let intercept = mg - slope * mp;
    let ssr: f64 = pred
        .iter()
        .zip(&gt)
        .map(|(p, g)| {
            let r = g - (slope * p + intercept);
            r * r
        })
        .sum();
    let see = (ssr / (n as f64 - 2.0)).sqrt();
    Ok(RegressionMetrics { pcc, mae, see })
}

/// ICC(2,1): two-way random effects, absolute agreement, single measurement,
/// with prediction and ground truth as the two raters.
pub fn icc(series: &PairedSeries) -> Result<f64> {
    let n = series.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "ICC needs >= 3 records, got {n}"
        )));
    }
    let k = 2.0;
    let nf = n as f64;
    let pred = series.predicted();
    let gt = series.ground_truth();
    let grand = (pred.iter().sum::<f64>() + gt.iter().sum::<f64>()) / (nf * k);
    let col_means = [mean(&pred), mean(&gt)];
    // Two-way ANOVA without replication.
    let mut ss_rows = 0.0;
    let mut ss_err = 0.0;
    for i in 0..n {
        let row_mean = (pred[i] + gt[i]) / k;
        ss_rows += k * (row_mean - grand) * (row_mean - grand);
        for (j, &v) in [pred[i], gt[i]].iter().enumerate() {
            let r = v - row_mean - col_means[j] + grand;
            ss_err += r * r;
        }
    }
    let ss_cols = nf
        * col_means
            .iter()
            .map(|m| (m - grand) * (m - grand))
            .sum::<f64>();
    let msr = ss_rows / (nf - 1.0);
    let msc = ss_cols / (k - 1.0);
    let mse = ss_err / ((nf - 1.0) * (k - 1.0));
    let denom = msr + (k - 1.0) * mse + (k / nf) * (msc - mse);
    if denom == 0.0 {
        return Err(Error::ZeroVariance(
            "ICC undefined: no variance in either rater".into(),
        ));
    }
    Ok((msr - mse) / denom)
}

/// Root mean square of per-case coefficients of variation across poses,
/// in percent. Uses the n-1 sample standard deviation.
pub fn rms_cv_percent(series: &PairedSeries) -> Result<f64> {
    let mut by_case: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in series.records() {
        by_case.entry(&r.case_id).or_default().push(r.predicted);
    }
    if by_case.is_empty() {
        return Err(Error::Degenerate("no cases".into()));
    }
    let mut sum_cv2 = 0.0;
    for (case, values) in &by_case {
        if values.len() < 2 {
            return Err(Error::Degenerate(format!(
                "case `{case}` has {} pose predictions, need >= 2",
                values.len()
            )));
        }
        let m = mean(values);
        if m <= 0.0 {
            return Err(Error::Range(format!(
                "case `{case}` has non-positive mean prediction {m}"
            )));
        }
        let var =
            values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0);
        let cv = var.sqrt() / m;
        sum_cv2 += cv * cv;
    }
    Ok((sum_cv2 / by_case.len() as f64).sqrt() * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionMetrics {
    /// `10 log10(peak^2 / MSE)` with peak = max of the ground-truth image;
    /// +infinity when the images are identical.
    pub psnr: f64,
    /// Dice coefficient averaged over the requested thresholds (thresholds
    /// where both masks are empty are skipped).
    pub mean_dice: f64,
}

/// Default Dice thresholds: 10%, 25%, 50% and 75% of the ground-truth max.
pub fn default_dice_thresholds(gt: &Image2D) -> Vec<f64> {
    let peak = gt.max();
    [0.10, 0.25, 0.50, 0.75].iter().map(|f| f * peak).collect()
}

/// PSNR and multi-threshold Dice between a ground-truth and predicted DRR.
pub fn decomposition_metrics(
    gt_drr: &Image2D,
    pred_drr: &Image2D,
    dice_thresholds: &[f64],
) -> Result<DecompositionMetrics> {
    if gt_drr.dims() != pred_drr.dims() {
        return Err(Error::DimMismatch(format!(
            "ground truth {:?} vs prediction {:?}",
            gt_drr.dims(),
            pred_drr.dims()
        )));
    }
    if dice_thresholds.is_empty() {
        return Err(Error::Degenerate("no dice thresholds supplied".into()));
    }
    let peak = gt_drr.max();
    if !(peak > 0.0) {
        return Err(Error::Degenerate(
            "ground-truth image has non-positive peak".into(),
        ));
    }
    let n = gt_drr.values().len() as f64;
    let mse = gt_drr
        .values()
        .iter()
        .zip(pred_drr.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    let mut dice_sum = 0.0;
    let mut dice_count = 0usize;
    for &t in dice_thresholds {
        let mut a_count = 0usize;
        let mut b_count = 0usize;
        let mut both = 0usize;
        for (&ga, &pa) in gt_drr.values().iter().zip(pred_drr.values()) {
            let ia = ga >= t;
            let ib = pa >= t;
            a_count += ia as usize;
            b_count += ib as usize;
            both += (ia && ib) as usize;
        }
        if a_count + b_count == 0 {
            continue;
        }
        dice_sum += 2.0 * both as f64 / (a_count + b_count) as f64;
        dice_count += 1;
    }
    if dice_count == 0 {
        return Err(Error::EmptyRegion(
            "all dice thresholds produced empty masks".into(),
        ));
    }
    Ok(DecompositionMetrics {
        psnr,
        mean_dice: dice_sum / dice_count as f64,
    })
}

/// Bland-Altman agreement report over prediction minus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct BlandAltmanReport {
    pub mean_diff: f64,
    /// Sample standard deviation (n-1) of the differences.
    pub sd_diff: f64,
    pub lower_limit: f64,
    pub upper_limit: f64,
    /// Per-record flag, strictly outside the limits of agreement.
    pub sample_outliers: Vec<bool>,
    /// Cases whose poses are all above the upper limit or all below the
    /// lower limit.
    pub case_outliers: Vec<String>,
}

pub fn bland_altman(series: &PairedSeries) -> Result<BlandAltmanReport> {
    let n = series.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "Bland-Altman needs >= 3 records, got {n}"
        )));
    }
    let diffs: Vec<f64> = series
        .records()
        .iter()
        .map(|r| r.predicted - r.ground_truth)
        .collect();
    let mean_diff = mean(&diffs);
    let var = diffs
        .iter()
        .map(|d| (d - mean_diff) * (d - mean_diff))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let sd_diff = var.sqrt();
    let lower_limit = mean_diff - 1.96 * sd_diff;
    let upper_limit = mean_diff + 1.96 * sd_diff;
    let sample_outliers: Vec<bool> = diffs
        .iter()
        .map(|&d| d > upper_limit || d < lower_limit)
        .collect();
    let mut case_sides: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for (r, &d) in series.records().iter().zip(&diffs) {
        let entry = case_sides.entry(&r.case_id).or_insert((true, true));
        entry.0 &= d > upper_limit;
        entry.1 &= d < lower_limit;
    }
    let case_outliers = case_sides
        .iter()
        .filter(|(_, (above, below))| *above || *below)
        .map(|(case, _)| case.to_string())
        .collect();
    Ok(BlandAltmanReport {
        mean_diff,
        sd_diff,
        lower_limit,
        upper_limit,
        sample_outliers,
        case_outliers,
    })
}
