//! Phantom-based linear calibration from CT radiodensity (HU) to volumetric
//! density (mg/cm^3).
//!
//! Calibration rods of known hydroxyapatite density are scanned with the
//! patient; a least-squares line through (mean HU, known density) pairs maps
//! the whole volume. Rod ROI means are supplied as a CSV table
//! (`rod_id,hu_mean,density_mg_cm3`), see [`read_rod_table`].

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{Volume3D, VolumeUnit};

/// Linear HU -> density map fitted from phantom rods.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationLine {
    /// (mg/cm^3) per HU.
    pub slope: f64,
    /// mg/cm^3.
    pub intercept: f64,
    /// Root-mean-square residual of the fit, mg/cm^3.
    pub residual_rmse: f64,
    pub n_samples: usize,
}

/// Ordinary least squares of `densities` on `hu_means`.
pub fn fit_calibration(hu_means: &[f64], densities: &[f64]) -> Result<CalibrationLine> {
    if hu_means.len() != densities.len() {
        return Err(Error::DimMismatch(format!(
            "{} HU samples vs {} density samples",
            hu_means.len(),
            densities.len()
        )));
    }
    let n = hu_means.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "calibration needs at least 2 rods, got {n}"
        )));
    }
    let nf = n as f64;
    let mean_x = hu_means.iter().sum::<f64>() / nf;
    let mean_y = densities.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in hu_means.iter().zip(densities) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::RankDeficient(
            "all rod HU means are identical".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = hu_means
        .iter()
        .zip(densities)
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok(CalibrationLine {
        slope,
        intercept,
        residual_rmse: (ss_res / nf).sqrt(),
        n_samples: n,
    })
}

/// Applies the calibration line voxel-wise, clamping negative densities to 0.
pub fn apply_calibration(volume: &Volume3D, line: &CalibrationLine) -> Result<Volume3D> {
    if volume.unit() != VolumeUnit::Hounsfield {
        return Err(Error::UnitMismatch {
            expected: VolumeUnit::Hounsfield.as_str().into(),
            found: volume.unit().as_str().into(),
        });
    }
    let values = volume
        .values()
        .iter()
        .map(|&hu| (line.slope * hu + line.intercept).max(0.0))
        .collect();
    volume.with_values(VolumeUnit::DensityMgCm3, values)
}

/// One row of the rod ROI table.
#[derive(Debug, Clone, PartialEq)]
pub struct RodSample {
    pub rod_id: String,
    pub hu_mean: f64,
    pub density_mg_cm3: f64,
}

/// Reads a rod table CSV with header `rod_id,hu_mean,density_mg_cm3`.
pub fn read_rod_table(path: &Path) -> Result<Vec<RodSample>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 {
            if line != "rod_id,hu_mean,density_mg_cm3" {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    key: "header".into(),
                    message: format!("expected `rod_id,hu_mean,density_mg_cm3`, got `{line}`"),
                });
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                key: format!("line {}", lineno + 1),
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let parse_f = |field: &str, name: &str| -> Result<f64> {
            field.parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                key: format!("{name} (line {})", lineno + 1),
                message: e.to_string(),
            })
        };
        rows.push(RodSample {
            rod_id: fields[0].to_string(),
            hu_mean: parse_f(fields[1], "hu_mean")?,
            density_mg_cm3: parse_f(fields[2], "density_mg_cm3")?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            key: "body".into(),
            message: "rod table has no data rows".into(),
        });
    }
    Ok(rows)
}

/// Writes a rod table CSV.
pub fn write_rod_table(rows: &[RodSample], path: &Path) -> Result<()> {
    let mut text = String::from("rod_id,hu_mean,density_mg_cm3\n");
    for r in rows {
        text.push_str(&format!("{},{},{}\n", r.rod_id, r.hu_mean, r.density_mg_cm3));
    }
    crate::imaging::atomic_write(path, text.as_bytes())
}

/// Fits a calibration line straight from a rod table.
pub fn fit_from_rod_table(rows: &[RodSample]) -> Result<CalibrationLine> {
    let hu: Vec<f64> = rows.iter().map(|r| r.hu_mean).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.density_mg_cm3).collect();
    fit_calibration(&hu, &d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_data() {
        let line = fit_calibration(&[0.0, 100.0, 200.0, 400.0], &[0.0, 50.0, 100.0, 200.0])
            .unwrap();
        assert!((line.slope - 0.5).abs() < 1e-12);
        assert!(line.intercept.abs() < 1e-12);
        assert!(line.residual_rmse < 1e-12);
        assert_eq!(line.n_samples, 4);
    }

    #[test]
    fn flat_density() {
        let line = fit_calibration(&[0.0, 1.0], &[5.0, 5.0]).unwrap();
        assert_eq!(line.slope, 0.0);
        assert_eq!(line.intercept, 5.0);
    }

    #[test]
    fn degenerate_hu_is_rank_deficient() {
        let err = fit_calibration(&[10.0, 10.0, 10.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
    }

    // Independent oracle: normal equations solved explicitly.
    fn normal_equation_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let det = n * sxx - sx * sx;
        ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    }

    #[test]
    fn noisy_fit_matches_normal_equations() {
        let hu = [12.0, 103.0, 197.0, 305.0, 401.0, 498.0];
        let d = [4.9, 55.2, 99.1, 153.8, 201.5, 247.9];
        let line = fit_calibration(&hu, &d).unwrap();
        let (slope, intercept) = normal_equation_fit(&hu, &d);
        assert!((line.slope - slope).abs() < 1e-9);
        assert!((line.intercept - intercept).abs() < 1e-9);
    }

    fn hu_volume(values: Vec<f64>) -> Volume3D {
        Volume3D::new(
            (values.len(), 1, 1),
            (1.0, 1.0, 1.0),
            (0.0, 0.0, 0.0),
            VolumeUnit::Hounsfield,
            values,
        )
        .unwrap()
    }

    #[test]
    fn apply_identity_slope() {
        let line = CalibrationLine {
            slope: 1.0,
            intercept: 0.0,
            residual_rmse: 0.0,
            n_samples: 2,
        };
        let out = apply_calibration(&hu_volume(vec![300.0]), &line).unwrap();
        assert_eq!(out.values(), &[300.0]);
        assert_eq!(out.unit(), VolumeUnit::DensityMgCm3);
    }

    #[test]
    fn apply_affine_map() {
        let line = CalibrationLine {
            slope: 0.5,
            intercept: 10.0,
            residual_rmse: 0.0,
            n_samples: 2,
        };
        let out = apply_calibration(&hu_volume(vec![100.0]), &line).unwrap();
        assert_eq!(out.values(), &[60.0]);
    }

    #[test]
    fn apply_clamps_negative_density() {
        let line = CalibrationLine {
            slope: 1.0,
            intercept: -50.0,
            residual_rmse: 0.0,
            n_samples: 2,
        };
        let out = apply_calibration(&hu_volume(vec![20.0]), &line).unwrap();
        assert_eq!(out.values(), &[0.0]);
    }

    #[test]
    fn apply_rejects_wrong_unit() {
        let line = CalibrationLine {
            slope: 1.0,
            intercept: 0.0,
            residual_rmse: 0.0,
            n_samples: 2,
        };
        let vol = Volume3D::filled(
            (1, 1, 1),
            (1.0, 1.0, 1.0),
            (0.0, 0.0, 0.0),
            VolumeUnit::Dimensionless,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            apply_calibration(&vol, &line).unwrap_err(),
            Error::UnitMismatch { .. }
        ));
    }

    #[test]
    fn apply_is_monotone_where_unclamped() {
        let line = CalibrationLine {
            slope: 0.7,
            intercept: 5.0,
            residual_rmse: 0.0,
            n_samples: 2,
        };
        let out = apply_calibration(&hu_volume(vec![10.0, 20.0, 30.0]), &line).unwrap();
        assert!(out.values()[0] < out.values()[1] && out.values()[1] < out.values()[2]);
    }
}
