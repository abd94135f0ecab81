use std::path::Path;

use crate::commands::{parse_f64, read_csv, resolve, write_atomic};
use crate::config::RunConfig;
use crate::{CliError, CliResult};
use bmdkit::bmd::{
    default_threshold_grid, drr_mean_intensity, fit_bmd_line, predict_bmd, tune_threshold,
    BmdCalibration, BmdTarget,
};
use bmdkit::imaging::{read_image, Image2D};

fn load_tuning_manifest(manifest: &Path) -> Result<(Vec<Image2D>, Vec<f64>), CliError> {
    let rows = read_csv(manifest, "drr,gt_bmd")?;
    let mut drrs = Vec::with_capacity(rows.len());
    let mut gt = Vec::with_capacity(rows.len());
    for row in rows {
        drrs.push(read_image(&resolve(manifest, &row[0])).map_err(CliError::from)?);
        gt.push(parse_f64(&row[1], "gt_bmd")?);
    }
    Ok((drrs, gt))
}

pub fn tune(
    config_path: &Path,
    manifest: &Path,
    out_curve: &Path,
    out_threshold: &Path,
) -> CliResult {
    let config = RunConfig::load(config_path)?;
    let grid_size = config.usize_or("threshold_grid_size", 64)?;
    if grid_size < 2 {
        return Err(CliError::Data("threshold_grid_size must be >= 2".into()));
    }
    let (drrs, gt) = load_tuning_manifest(manifest)?;
    // Evenly spaced grid up to the pooled 99th percentile, resized to the
    // configured number of points.
    let default_grid = default_threshold_grid(&drrs);
    let top = default_grid.last().copied().unwrap_or(0.0);
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| top * i as f64 / (grid_size - 1) as f64)
        .collect();
    let curve = tune_threshold(&drrs, &gt, &grid).map_err(CliError::from)?;
    let mut text = String::from("threshold,pcc,valid\n");
    for p in &curve.points {
        match p.pcc {
            Some(pcc) => text.push_str(&format!("{},{},1\n", p.threshold, pcc)),
            None => text.push_str(&format!("{},,0\n", p.threshold)),
        }
    }
    write_atomic(out_curve, &text)?;
    write_atomic(out_threshold, &format!("{}\n", curve.best_threshold))?;
    println!(
        "threshold {} with pcc {}",
        curve.best_threshold, curve.best_pcc
    );
    Ok(())
}

fn threshold_from_arg(arg: &str) -> Result<f64, CliError> {
    if let Ok(v) = arg.parse::<f64>() {
        return Ok(v);
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("threshold `{arg}` is neither a number nor a readable file: {e}")))?;
    text.trim()
        .parse::<f64>()
        .map_err(|e| CliError::Data(format!("bad threshold in {}: {e}", path.display())))
}

pub fn fit(manifest: &Path, threshold_arg: &str, target: &str, out: &Path) -> CliResult {
    let threshold = threshold_from_arg(threshold_arg)?;
    let target = BmdTarget::parse(target)
        .ok_or_else(|| CliError::Data(format!("target must be dxa or qct, got `{target}`")))?;
    let (drrs, gt) = load_tuning_manifest(manifest)?;
    let mut means = Vec::with_capacity(drrs.len());
    for drr in &drrs {
        let (mean, _) = drr_mean_intensity(drr, threshold).map_err(CliError::from)?;
        means.push(mean);
    }
    let cal = fit_bmd_line(&means, &gt, threshold, target).map_err(CliError::from)?;
    crate::commands::ensure_parent(out)?;
    cal.save(out).map_err(CliError::from)?;
    println!(
        "fit slope {} intercept {} pcc {}",
        cal.slope, cal.intercept, cal.pcc_at_fit
    );
    Ok(())
}

pub fn predict(manifest: &Path, calibration: &Path, out: &Path) -> CliResult {
    let cal = BmdCalibration::load(calibration).map_err(CliError::from)?;
    let rows = read_csv(manifest, "case_id,pose,drr,gt_bmd")?;
    let mut table = String::from("case_id,pose,mean_intensity,pred_bmd,gt_bmd\n");
    for row in rows {
        let drr = read_image(&resolve(manifest, &row[2])).map_err(CliError::from)?;
        let (mean, _) = drr_mean_intensity(&drr, cal.threshold).map_err(CliError::from)?;
        let pred = predict_bmd(&drr, &cal).map_err(CliError::from)?;
        let gt = parse_f64(&row[3], "gt_bmd")?;
        table.push_str(&format!("{},{},{},{},{}\n", row[0], row[1], mean, pred, gt));
    }
    write_atomic(out, &table)?;
    Ok(())
}
