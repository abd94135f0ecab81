//! Trilinear volume sampling and the ray-marching DRR integrator.

use rayon::prelude::*;

use crate::error::Result;
use crate::imaging::{Image2D, ImageUnit, Mask3D, Volume3D, VolumeUnit};
use crate::projection::{ProjectionGeometry, ProjectionMode};
use crate::registration::RigidTransform6;

/// mg/cm^3 * mm -> g/cm^2.
const AREAL_SCALE: f64 = 1e-4;

/// Samples a volume in fractional-index coordinates.
///
/// The physical domain spans half a voxel beyond the outermost voxel centers
/// on each axis; points outside it return 0, points in the outer half-voxel
/// band clamp to the edge value, interior points interpolate trilinearly.
struct IndexSampler<'a> {
    values: &'a [f64],
    nx: usize,
    ny: usize,
    nz: usize,
}

impl<'a> IndexSampler<'a> {
    fn new(volume: &'a Volume3D) -> Self {
        let (nx, ny, nz) = volume.dims();
        Self {
            values: volume.values(),
            nx,
            ny,
            nz,
        }
    }

    #[inline]
    fn sample(&self, x: f64, y: f64, z: f64) -> f64 {
        let (nx, ny, nz) = (self.nx as f64, self.ny as f64, self.nz as f64);
        if !(-0.5..=nx - 0.5).contains(&x)
            || !(-0.5..=ny - 0.5).contains(&y)
            || !(-0.5..=nz - 0.5).contains(&z)
        {
            return 0.0;
        }
        let x = x.clamp(0.0, nx - 1.0);
        let y = y.clamp(0.0, ny - 1.0);
        let z = z.clamp(0.0, nz - 1.0);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let z0 = z.floor() as usize;
        let x1 = (x0 + 1).min(self.nx - 1);
        let y1 = (y0 + 1).min(self.ny - 1);
        let z1 = (z0 + 1).min(self.nz - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let fz = z - z0 as f64;
        let idx = |i: usize, j: usize, k: usize| i + self.nx * (j + self.ny * k);
        let c000 = self.values[idx(x0, y0, z0)];
        let c100 = self.values[idx(x1, y0, z0)];
        let c010 = self.values[idx(x0, y1, z0)];
        let c110 = self.values[idx(x1, y1, z0)];
        let c001 = self.values[idx(x0, y0, z1)];
        let c101 = self.values[idx(x1, y0, z1)];
        let c011 = self.values[idx(x0, y1, z1)];
        let c111 = self.values[idx(x1, y1, z1)];
        let c00 = c000 + (c100 - c000) * fx;
        let c10 = c010 + (c110 - c010) * fx;
        let c01 = c001 + (c101 - c001) * fx;
        let c11 = c011 + (c111 - c011) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        c0 + (c1 - c0) * fz
    }
}

/// Trilinear interpolation of `volume` at a world point (mm); points outside
/// the volume return 0.
pub fn sample_trilinear(volume: &Volume3D, point_mm: [f64; 3]) -> f64 {
    let (sx, sy, sz) = volume.spacing();
    let (ox, oy, oz) = volume.origin();
    IndexSampler::new(volume).sample(
        (point_mm[0] - ox) / sx,
        (point_mm[1] - oy) / sy,
        (point_mm[2] - oz) / sz,
    )
}

/// Intersects the parametric segment `s0 + t*sd` with the index-space box
/// `[-0.5, n-0.5]^3` over `t` in `[t_min, t_max]`. Returns `None` on a miss.
fn clip_to_box(
    s0: [f64; 3],
    sd: [f64; 3],
    dims: (usize, usize, usize),
    mut t_lo: f64,
    mut t_hi: f64,
) -> Option<(f64, f64)> {
    let bounds = [
        (-0.5, dims.0 as f64 - 0.5),
        (-0.5, dims.1 as f64 - 0.5),
        (-0.5, dims.2 as f64 - 0.5),
    ];
    for ax in 0..3 {
        let (lo, hi) = bounds[ax];
        if sd[ax].abs() < 1e-300 {
            if s0[ax] < lo || s0[ax] > hi {
                return None;
            }
            continue;
        }
        let ta = (lo - s0[ax]) / sd[ax];
        let tb = (hi - s0[ax]) / sd[ax];
        let (ta, tb) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        t_lo = t_lo.max(ta);
        t_hi = t_hi.min(tb);
        if t_lo >= t_hi {
            return None;
        }
    }
    Some((t_lo, t_hi))
}

/// Renders a DRR of `volume` (optionally restricted by `mask`) under `pose`.
///
/// Each pixel is the line integral `sum rho(p_k) * m(p_k) * dl` along its
/// ray, with the mask resampled trilinearly and cut at 0.5. The integral is
/// converted by 1e-4 so density volumes (mg/cm^3) yield areal density in
/// g/cm^2. The pose moves the volume; rays stay fixed.
pub fn render_drr(
    volume: &Volume3D,
    mask: Option<&Mask3D>,
    geometry: &ProjectionGeometry,
    pose: &RigidTransform6,
) -> Result<Image2D> {
    geometry.validate()?;
    if let Some(m) = mask {
        m.matches(volume)?;
    }

    let center = volume.centroid();
    let rot_inv = pose.rotation_transposed();
    let trans = pose.translation();
    let (sx, sy, sz) = volume.spacing();
    let (ox, oy, oz) = volume.origin();

    // world -> fractional index under the inverse pose
    let to_index = |p: [f64; 3]| -> [f64; 3] {
        let rel = [
            p[0] - center[0] - trans[0],
            p[1] - center[1] - trans[1],
            p[2] - center[2] - trans[2],
        ];
        let q = [
            rot_inv[0][0] * rel[0] + rot_inv[0][1] * rel[1] + rot_inv[0][2] * rel[2] + center[0],
            rot_inv[1][0] * rel[0] + rot_inv[1][1] * rel[1] + rot_inv[1][2] * rel[2] + center[1],
            rot_inv[2][0] * rel[0] + rot_inv[2][1] * rel[1] + rot_inv[2][2] * rel[2] + center[2],
        ];
        [(q[0] - ox) / sx, (q[1] - oy) / sy, (q[2] - oz) / sz]
    };
    // direction vectors rotate without translation
    let dir_to_index = |d: [f64; 3]| -> [f64; 3] {
        [
            (rot_inv[0][0] * d[0] + rot_inv[0][1] * d[1] + rot_inv[0][2] * d[2]) / sx,
            (rot_inv[1][0] * d[0] + rot_inv[1][1] * d[1] + rot_inv[1][2] * d[2]) / sy,
            (rot_inv[2][0] * d[0] + rot_inv[2][1] * d[1] + rot_inv[2][2] * d[2]) / sz,
        ]
    };

    let sampler = IndexSampler::new(volume);
    let mask_sampler = mask.map(|m| IndexSampler::new(m.as_volume()));
    let dims = volume.dims();
    let (w, h) = geometry.detector_dims;
    let step = geometry.step_mm;

    let integrate_row = |j: usize| -> Vec<f64> {
        let mut row = Vec::with_capacity(w);
        for i in 0..w {
            let pixel = geometry.pixel_center(i, j);
            // Ray parametrized by world arc length (mm).
            let (p0, d, t_lo, t_hi) = match geometry.mode {
                ProjectionMode::Parallel => {
                    (pixel, geometry.ray_dir.unwrap(), f64::NEG_INFINITY, f64::INFINITY)
                }
                ProjectionMode::Pinhole => {
                    let s = geometry.source.unwrap();
                    let d = [pixel[0] - s[0], pixel[1] - s[1], pixel[2] - s[2]];
                    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    (s, [d[0] / len, d[1] / len, d[2] / len], 0.0, f64::INFINITY)
                }
            };
            let s0 = to_index(p0);
            let sd = dir_to_index(d);
            let Some((t0, t1)) = clip_to_box(s0, sd, dims, t_lo, t_hi) else {
                row.push(0.0);
                continue;
            };
            let length = t1 - t0;
            let n_full = (length / step).floor() as usize;
            let remainder = length - n_full as f64 * step;
            let mut accum = 0.0;
            let sample_at = |t: f64| -> f64 {
                let p = [s0[0] + t * sd[0], s0[1] + t * sd[1], s0[2] + t * sd[2]];
                let inside = match &mask_sampler {
                    Some(ms) => ms.sample(p[0], p[1], p[2]) >= 0.5,
                    None => true,
                };
                if inside {
                    sampler.sample(p[0], p[1], p[2])
                } else {
                    0.0
                }
            };
            for k in 0..n_full {
                let t = t0 + (k as f64 + 0.5) * step;
                accum += sample_at(t) * step;
            }
            if remainder > 0.0 {
                let t = t0 + n_full as f64 * step + remainder / 2.0;
                accum += sample_at(t) * remainder;
            }
            row.push(accum * AREAL_SCALE);
        }
        row
    };

    // Parallel across rows only; each pixel accumulates in fixed order, so
    // the result is identical for any thread count.
    let rows: Vec<Vec<f64>> = (0..h).into_par_iter().map(integrate_row).collect();
    let mut values = Vec::with_capacity(w * h);
    for row in rows {
        values.extend(row);
    }

    let unit = if volume.unit() == VolumeUnit::DensityMgCm3 {
        ImageUnit::ArealGCm2
    } else {
        ImageUnit::Dimensionless
    };
    Image2D::new((w, h), geometry.detector_spacing, unit, values)
}
