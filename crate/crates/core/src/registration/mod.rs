//! Intensity-based rigid 2D-3D registration: gradient-correlation similarity
//! optimized by CMA-ES over a 6-DOF pose.

mod cma;

pub use cma::{cma_es_minimize, CmaConfig, CmaEs, CmaResult, StopReason};

use crate::error::{Error, Result};
use crate::imaging::{Image2D, Mask3D, Volume3D};
use crate::projection::{render_drr, ProjectionGeometry};

/// 6-DOF rigid pose: rotations in degrees (x applied first, then y, then z,
/// i.e. `R = Rz * Ry * Rx`) about the volume centroid, translations in mm.
/// Angles are canonicalized to `(-180, 180]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform6 {
    rx_deg: f64,
    ry_deg: f64,
    rz_deg: f64,
    tx_mm: f64,
    ty_mm: f64,
    tz_mm: f64,
}

fn canonical_angle(deg: f64) -> f64 {
    let a = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if a == -180.0 {
        180.0
    } else {
        a
    }
}

impl RigidTransform6 {
    pub fn new(rx_deg: f64, ry_deg: f64, rz_deg: f64, tx_mm: f64, ty_mm: f64, tz_mm: f64) -> Self {
        Self {
            rx_deg: canonical_angle(rx_deg),
            ry_deg: canonical_angle(ry_deg),
            rz_deg: canonical_angle(rz_deg),
            tx_mm,
            ty_mm,
            tz_mm,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn from_array(p: [f64; 6]) -> Self {
        Self::new(p[0], p[1], p[2], p[3], p[4], p[5])
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.rx_deg, self.ry_deg, self.rz_deg, self.tx_mm, self.ty_mm, self.tz_mm,
        ]
    }

    pub fn rotations_deg(&self) -> [f64; 3] {
        [self.rx_deg, self.ry_deg, self.rz_deg]
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.tx_mm, self.ty_mm, self.tz_mm]
    }

    /// Rotation matrix `Rz * Ry * Rx`.
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let (sx, cx) = self.rx_deg.to_radians().sin_cos();
        let (sy, cy) = self.ry_deg.to_radians().sin_cos();
        let (sz, cz) = self.rz_deg.to_radians().sin_cos();
        [
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ]
    }

    pub fn rotation_transposed(&self) -> [[f64; 3]; 3] {
        let r = self.rotation();
        [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ]
    }

    /// Maps a material point to world coordinates: `R (p - c) + c + t`.
    pub fn apply_point(&self, p: [f64; 3], center: [f64; 3]) -> [f64; 3] {
        let r = self.rotation();
        let rel = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
        [
            r[0][0] * rel[0] + r[0][1] * rel[1] + r[0][2] * rel[2] + center[0] + self.tx_mm,
            r[1][0] * rel[0] + r[1][1] * rel[1] + r[1][2] * rel[2] + center[1] + self.ty_mm,
            r[2][0] * rel[0] + r[2][1] * rel[1] + r[2][2] * rel[2] + center[2] + self.tz_mm,
        ]
    }
}

/// Image gradients by central differences, one-sided at the borders.
pub fn gradient_image(image: &Image2D) -> Result<(Image2D, Image2D)> {
    let (w, h) = image.dims();
    if w < 2 || h < 2 {
        return Err(Error::Degenerate(format!(
            "gradients need at least 2x2 pixels, got {w}x{h}"
        )));
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = x + w * y;
            gx[i] = if x == 0 {
                image.at(1, y) - image.at(0, y)
            } else if x == w - 1 {
                image.at(w - 1, y) - image.at(w - 2, y)
            } else {
                (image.at(x + 1, y) - image.at(x - 1, y)) / 2.0
            };
            gy[i] = if y == 0 {
                image.at(x, 1) - image.at(x, 0)
            } else if y == h - 1 {
                image.at(x, h - 1) - image.at(x, h - 2)
            } else {
                (image.at(x, y + 1) - image.at(x, y - 1)) / 2.0
            };
        }
    }
    Ok((
        image.with_values(crate::imaging::ImageUnit::Dimensionless, gx)?,
        image.with_values(crate::imaging::ImageUnit::Dimensionless, gy)?,
    ))
}

/// Zero-mean normalized cross-correlation of two same-size images.
pub fn ncc(a: &Image2D, b: &Image2D) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimMismatch(format!(
            "ncc inputs {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let n = a.values().len() as f64;
    let mean_a = a.values().iter().sum::<f64>() / n;
    let mean_b = b.values().iter().sum::<f64>() / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&va, &vb) in a.values().iter().zip(b.values()) {
        let da = va - mean_a;
        let db = vb - mean_b;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance(
            "ncc undefined for a constant image".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Gradient correlation: `NCC(dA/dx, dB/dx) + NCC(dA/dy, dB/dy)`, in [-2, 2].
pub fn gc_similarity(a: &Image2D, b: &Image2D) -> Result<f64> {
    let (gax, gay) = gradient_image(a)?;
    let (gbx, gby) = gradient_image(b)?;
    Ok(ncc(&gax, &gbx)? + ncc(&gay, &gby)?)
}

/// Result of a 2D-3D registration run.
#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub pose: RigidTransform6,
    /// Gradient correlation at the returned pose.
    pub gc: f64,
    pub evaluations: usize,
}

/// Registers `volume` to `xray` by maximizing gradient correlation between
/// the X-ray and the DRR rendered under the candidate pose. Never returns a
/// pose scoring below the initial one.
pub fn register_2d3d(
    xray: &Image2D,
    volume: &Volume3D,
    mask: Option<&Mask3D>,
    geometry: &ProjectionGeometry,
    init: &RigidTransform6,
    config: &CmaConfig,
) -> Result<RegistrationResult> {
    geometry.validate()?;
    if xray.dims() != geometry.detector_dims {
        return Err(Error::DimMismatch(format!(
            "x-ray dims {:?} do not match detector dims {:?}",
            xray.dims(),
            geometry.detector_dims
        )));
    }

    let init_drr = render_drr(volume, mask, geometry, init)?;
    let gc_init = gc_similarity(xray, &init_drr).map_err(|e| match e {
        Error::ZeroVariance(_) => Error::RegistrationFailure(
            "constant DRR or X-ray at the initial pose; no gradient signal".into(),
        ),
        other => other,
    })?;

    let objective = |params: &[f64]| -> f64 {
        let pose = RigidTransform6::new(
            params[0], params[1], params[2], params[3], params[4], params[5],
        );
        match render_drr(volume, mask, geometry, &pose) {
            Ok(drr) => match gc_similarity(xray, &drr) {
                Ok(gc) => -gc,
                Err(_) => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };

    let result = cma_es_minimize(objective, &init.to_array(), config)?;
    // The initial pose is always evaluated first, so f_best <= -gc_init.
    debug_assert!(result.f_best <= -gc_init + 1e-12);
    if !result.f_best.is_finite() {
        return Err(Error::RegistrationFailure(
            "objective never became finite during the search".into(),
        ));
    }
    Ok(RegistrationResult {
        pose: RigidTransform6::from_array([
            result.x_best[0],
            result.x_best[1],
            result.x_best[2],
            result.x_best[3],
            result.x_best[4],
            result.x_best[5],
        ]),
        gc: -result.f_best,
        evaluations: result.evaluations,
    })
}
