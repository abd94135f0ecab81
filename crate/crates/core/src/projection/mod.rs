//! Masked ray-casting DRR rendering from a calibrated volume.
//!
//! Detector pixels are marched along rays with a fixed step; per pixel the
//! accumulation order is fixed so renders are bit-identical regardless of
//! how work is scheduled across threads.

mod render;

pub use render::{render_drr, sample_trilinear};

use std::path::Path;

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    Parallel,
    Pinhole,
}

/// Detector and ray geometry for DRR rendering.
///
/// The detector is a `detector_dims` grid of pixels spaced
/// `detector_spacing` mm apart, centered on `detector_center` and spanned by
/// the orthonormal basis (`basis_u`, `basis_v`). Rays either share one
/// direction (`Parallel`) or fan out from `source` (`Pinhole`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGeometry {
    pub mode: ProjectionMode,
    pub detector_dims: (usize, usize),
    pub detector_spacing: (f64, f64),
    pub detector_center: [f64; 3],
    pub basis_u: [f64; 3],
    pub basis_v: [f64; 3],
    /// Unit ray direction; required for `Parallel`.
    pub ray_dir: Option<[f64; 3]>,
    /// Source position in mm; required for `Pinhole`.
    pub source: Option<[f64; 3]>,
    /// Ray-marching step length in mm.
    pub step_mm: f64,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl ProjectionGeometry {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.detector_dims;
        if w == 0 || h == 0 {
            return Err(Error::InvalidConfig(format!(
                "detector dims must be positive, got {w}x{h}"
            )));
        }
        if !(self.detector_spacing.0 > 0.0 && self.detector_spacing.1 > 0.0) {
            return Err(Error::InvalidConfig("detector spacing must be > 0".into()));
        }
        if !(self.step_mm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step_mm must be > 0, got {}",
                self.step_mm
            )));
        }
        if (norm(self.basis_u) - 1.0).abs() > ORTHONORMAL_TOL
            || (norm(self.basis_v) - 1.0).abs() > ORTHONORMAL_TOL
            || dot(self.basis_u, self.basis_v).abs() > ORTHONORMAL_TOL
        {
            return Err(Error::InvalidConfig(
                "detector basis is not orthonormal".into(),
            ));
        }
        match self.mode {
            ProjectionMode::Parallel => {
                let d = self.ray_dir.ok_or_else(|| {
                    Error::InvalidConfig("parallel mode requires ray_dir".into())
                })?;
                if (norm(d) - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidConfig("ray_dir must be a unit vector".into()));
                }
            }
            ProjectionMode::Pinhole => {
                let s = self
                    .source
                    .ok_or_else(|| Error::InvalidConfig("pinhole mode requires source".into()))?;
                let normal = cross(self.basis_u, self.basis_v);
                let off = [
                    s[0] - self.detector_center[0],
                    s[1] - self.detector_center[1],
                    s[2] - self.detector_center[2],
                ];
                if dot(normal, off).abs() < 1e-6 {
                    return Err(Error::InvalidConfig(
                        "pinhole source lies on the detector plane".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// World position of the center of detector pixel (i, j).
    pub fn pixel_center(&self, i: usize, j: usize) -> [f64; 3] {
        let (w, h) = self.detector_dims;
        let du = (i as f64 + 0.5 - w as f64 / 2.0) * self.detector_spacing.0;
        let dv = (j as f64 + 0.5 - h as f64 / 2.0) * self.detector_spacing.1;
        [
            self.detector_center[0] + du * self.basis_u[0] + dv * self.basis_v[0],
            self.detector_center[1] + du * self.basis_u[1] + dv * self.basis_v[1],
            self.detector_center[2] + du * self.basis_u[2] + dv * self.basis_v[2],
        ]
    }

    /// Parses a `key = value` geometry config.
    pub fn from_config(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut mode = None;
        let mut detector_dims = None;
        let mut detector_spacing = None;
        let mut detector_center = None;
        let mut basis_u = None;
        let mut basis_v = None;
        let mut ray_dir = None;
        let mut source = None;
        let mut step_mm = None;
        let perr = |key: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            key: key.into(),
            message,
        };
        let parse3 = |key: &str, v: &str| -> Result<[f64; 3]> {
            let vals: Vec<f64> = v
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(key, format!("bad float: {e}")))?;
            if vals.len() != 3 {
                return Err(perr(key, format!("expected 3 values, got {}", vals.len())));
            }
            Ok([vals[0], vals[1], vals[2]])
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                perr(
                    &format!("line {}", lineno + 1),
                    "expected `key = value`".into(),
                )
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "mode" => {
                    mode = Some(match value {
                        "parallel" => ProjectionMode::Parallel,
                        "pinhole" => ProjectionMode::Pinhole,
                        other => return Err(perr("mode", format!("unknown mode `{other}`"))),
                    })
                }
                "detector_dims" => {
                    let vals: Vec<usize> = value
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| perr("detector_dims", format!("bad integer: {e}")))?;
                    if vals.len() != 2 {
                        return Err(perr("detector_dims", "expected 2 values".into()));
                    }
                    detector_dims = Some((vals[0], vals[1]));
                }
                "detector_spacing" => {
                    let vals: Vec<f64> = value
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| perr("detector_spacing", format!("bad float: {e}")))?;
                    if vals.len() != 2 {
                        return Err(perr("detector_spacing", "expected 2 values".into()));
                    }
                    detector_spacing = Some((vals[0], vals[1]));
                }
                "detector_center" => detector_center = Some(parse3("detector_center", value)?),
                "basis_u" => basis_u = Some(parse3("basis_u", value)?),
                "basis_v" => basis_v = Some(parse3("basis_v", value)?),
                "ray_dir" => ray_dir = Some(parse3("ray_dir", value)?),
                "source" => source = Some(parse3("source", value)?),
                "step_mm" => {
                    step_mm = Some(
                        value
                            .parse::<f64>()
                            .map_err(|e| perr("step_mm", format!("bad float: {e}")))?,
                    )
                }
                other => return Err(perr(other, "unknown geometry key".into())),
            }
        }
        let geometry = ProjectionGeometry {
            mode: mode.ok_or_else(|| perr("mode", "missing required key".into()))?,
            detector_dims: detector_dims
                .ok_or_else(|| perr("detector_dims", "missing required key".into()))?,
            detector_spacing: detector_spacing
                .ok_or_else(|| perr("detector_spacing", "missing required key".into()))?,
            detector_center: detector_center
                .ok_or_else(|| perr("detector_center", "missing required key".into()))?,
            basis_u: basis_u.ok_or_else(|| perr("basis_u", "missing required key".into()))?,
            basis_v: basis_v.ok_or_else(|| perr("basis_v", "missing required key".into()))?,
            ray_dir,
            source,
            step_mm: step_mm.ok_or_else(|| perr("step_mm", "missing required key".into()))?,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Serializes to the `key = value` config format.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "mode = {}\n",
            match self.mode {
                ProjectionMode::Parallel => "parallel",
                ProjectionMode::Pinhole => "pinhole",
            }
        ));
        s.push_str(&format!(
            "detector_dims = {} {}\n",
            self.detector_dims.0, self.detector_dims.1
        ));
        s.push_str(&format!(
            "detector_spacing = {} {}\n",
            self.detector_spacing.0, self.detector_spacing.1
        ));
        let v3 = |v: [f64; 3]| format!("{} {} {}", v[0], v[1], v[2]);
        s.push_str(&format!("detector_center = {}\n", v3(self.detector_center)));
        s.push_str(&format!("basis_u = {}\n", v3(self.basis_u)));
        s.push_str(&format!("basis_v = {}\n", v3(self.basis_v)));
        if let Some(d) = self.ray_dir {
            s.push_str(&format!("ray_dir = {}\n", v3(d)));
        }
        if let Some(src) = self.source {
            s.push_str(&format!("source = {}\n", v3(src)));
        }
        s.push_str(&format!("step_mm = {}\n", self.step_mm));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parallel_geometry() -> ProjectionGeometry {
        ProjectionGeometry {
            mode: ProjectionMode::Parallel,
            detector_dims: (4, 4),
            detector_spacing: (1.0, 1.0),
            detector_center: [0.0, -10.0, 0.0],
            basis_u: [1.0, 0.0, 0.0],
            basis_v: [0.0, 0.0, 1.0],
            ray_dir: Some([0.0, 1.0, 0.0]),
            source: None,
            step_mm: 0.5,
        }
    }

    #[test]
    fn valid_geometry_passes() {
        parallel_geometry().validate().unwrap();
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let mut g = parallel_geometry();
        g.basis_v = [0.1, 0.0, 1.0];
        assert!(g.validate().is_err());
    }

    #[test]
    fn source_on_detector_plane_rejected() {
        let mut g = parallel_geometry();
        g.mode = ProjectionMode::Pinhole;
        g.ray_dir = None;
        g.source = Some([3.0, -10.0, 2.0]);
        assert!(g.validate().is_err());
    }

    #[test]
    fn config_roundtrip() {
        let g = parallel_geometry();
        let dir = std::env::temp_dir().join(format!("bmdkit-geom-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("geom.cfg");
        std::fs::write(&path, g.to_config_string()).unwrap();
        let back = ProjectionGeometry::from_config(&path).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn config_unknown_key_is_named() {
        let dir = std::env::temp_dir().join(format!("bmdkit-geom-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.cfg");
        std::fs::write(&path, "mode = parallel\nwobble = 3\n").unwrap();
        match ProjectionGeometry::from_config(&path).unwrap_err() {
            Error::Parse { key, .. } => assert_eq!(key, "wobble"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
