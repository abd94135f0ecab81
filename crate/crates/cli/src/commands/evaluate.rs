use std::path::Path;

use crate::commands::{parse_f64, read_csv, resolve, write_atomic};
use crate::{CliError, CliResult};
use bmdkit::imaging::read_image;
use bmdkit::metrics::{
    bland_altman, decomposition_metrics, icc, regression_metrics, rms_cv_percent, PairedRecord,
    PairedSeries,
};

pub fn run(
    table: &Path,
    out_dir: &Path,
    drr_pairs: Option<&Path>,
    config_path: Option<&Path>,
) -> CliResult {
    let dice_fractions = match config_path {
        Some(p) => crate::config::RunConfig::load(p)?.dice_fractions()?,
        None => vec![0.10, 0.25, 0.50, 0.75],
    };
    let rows = read_csv(table, "case_id,pose,mean_intensity,pred_bmd,gt_bmd")?;
    let mut records = Vec::with_capacity(rows.len());
    for row in &rows {
        records.push(PairedRecord {
            case_id: row[0].clone(),
            pose: row[1].clone(),
            predicted: parse_f64(&row[3], "pred_bmd")?,
            ground_truth: parse_f64(&row[4], "gt_bmd")?,
        });
    }
    let series = PairedSeries::new(records).map_err(CliError::from)?;

    let reg = regression_metrics(&series).map_err(CliError::from)?;
    let icc_value = icc(&series).map_err(CliError::from)?;
    let ba = bland_altman(&series).map_err(CliError::from)?;

    let mut metrics = String::from("metric,value\n");
    metrics.push_str(&format!("pcc,{}\n", reg.pcc));
    metrics.push_str(&format!("mae,{}\n", reg.mae));
    metrics.push_str(&format!("see,{}\n", reg.see));
    metrics.push_str(&format!("icc2_1,{icc_value}\n"));
    // RMS-CV needs repeated poses per case; leave it out otherwise.
    if let Ok(rms) = rms_cv_percent(&series) {
        metrics.push_str(&format!("rms_cv_percent,{rms}\n"));
    }
    metrics.push_str(&format!("ba_mean_diff,{}\n", ba.mean_diff));
    metrics.push_str(&format!("ba_sd_diff,{}\n", ba.sd_diff));
    metrics.push_str(&format!("ba_lower_limit,{}\n", ba.lower_limit));
    metrics.push_str(&format!("ba_upper_limit,{}\n", ba.upper_limit));
    metrics.push_str(&format!(
        "ba_sample_outliers,{}\n",
        ba.sample_outliers.iter().filter(|&&o| o).count()
    ));
    metrics.push_str(&format!("ba_case_outliers,{}\n", ba.case_outliers.len()));

    let mut ba_csv = String::from("case_id,pose,mean_value,diff,sample_outlier\n");
    for (r, &outlier) in series.records().iter().zip(&ba.sample_outliers) {
        ba_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.case_id,
            r.pose,
            (r.predicted + r.ground_truth) / 2.0,
            r.predicted - r.ground_truth,
            outlier as u8
        ));
    }

    if let Some(pairs_path) = drr_pairs {
        let pairs = read_csv(pairs_path, "gt_drr,pred_drr")?;
        let mut dec = String::from("gt_drr,pred_drr,psnr,mean_dice\n");
        for row in pairs {
            let gt = read_image(&resolve(pairs_path, &row[0])).map_err(CliError::from)?;
            let pred = read_image(&resolve(pairs_path, &row[1])).map_err(CliError::from)?;
            let peak = gt.max();
            let thresholds: Vec<f64> = dice_fractions.iter().map(|f| f * peak).collect();
            let m = decomposition_metrics(&gt, &pred, &thresholds).map_err(CliError::from)?;
            dec.push_str(&format!("{},{},{},{}\n", row[0], row[1], m.psnr, m.mean_dice));
        }
        write_atomic(&out_dir.join("decomposition.csv"), &dec)?;
    }

    write_atomic(&out_dir.join("metrics.csv"), &metrics)?;
    write_atomic(&out_dir.join("bland_altman.csv"), &ba_csv)?;
    println!(
        "pcc {} mae {} see {} icc {}",
        reg.pcc, reg.mae, reg.see, icc_value
    );
    Ok(())
}
