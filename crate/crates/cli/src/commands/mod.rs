pub mod bmd;
pub mod calibrate;
pub mod evaluate;
pub mod losses_check;
pub mod project;
pub mod register;
pub mod synth;

use std::path::{Path, PathBuf};

use crate::CliError;
use bmdkit::registration::RigidTransform6;

/// Parses `rx,ry,rz,tx,ty,tz`.
pub fn parse_pose(text: &str) -> Result<RigidTransform6, CliError> {
    let parts: Vec<&str> = text.split(',').map(|s| s.trim()).collect();
    if parts.len() != 6 {
        return Err(CliError::Data(format!(
            "pose needs 6 comma-separated values, got {}",
            parts.len()
        )));
    }
    let mut vals = [0.0; 6];
    for (i, p) in parts.iter().enumerate() {
        vals[i] = p
            .parse::<f64>()
            .map_err(|e| CliError::Data(format!("bad pose component `{p}`: {e}")))?;
    }
    Ok(RigidTransform6::from_array(vals))
}

/// Reads a CSV with an exact expected header; returns the data rows split
/// into fields.
pub fn read_csv(path: &Path, header: &str) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let n_fields = header.split(',').count();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 {
            if line != header {
                return Err(CliError::Data(format!(
                    "{}: expected header `{header}`, got `{line}`",
                    path.display()
                )));
            }
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if fields.len() != n_fields {
            return Err(CliError::Data(format!(
                "{} line {}: expected {} fields, got {}",
                path.display(),
                lineno + 1,
                n_fields,
                fields.len()
            )));
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

pub fn parse_f64(field: &str, what: &str) -> Result<f64, CliError> {
    field
        .parse::<f64>()
        .map_err(|e| CliError::Data(format!("bad {what} `{field}`: {e}")))
}

/// Resolves a manifest-relative path.
pub fn resolve(manifest: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        manifest
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(p)
    }
}

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

pub fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    bmdkit::imaging::atomic_write(path, text.as_bytes()).map_err(CliError::from)
}

/// Selects a named pose from a `poses.csv` table.
pub fn pose_from_table(path: &Path, name: &str) -> Result<RigidTransform6, CliError> {
    let rows = read_csv(path, "pose,rx_deg,ry_deg,rz_deg,tx_mm,ty_mm,tz_mm")?;
    for row in rows {
        if row[0] == name {
            let mut vals = [0.0; 6];
            for (i, v) in vals.iter_mut().enumerate() {
                *v = parse_f64(&row[i + 1], "pose component")?;
            }
            return Ok(RigidTransform6::from_array(vals));
        }
    }
    Err(CliError::Data(format!(
        "pose `{name}` not found in {}",
        path.display()
    )))
}
