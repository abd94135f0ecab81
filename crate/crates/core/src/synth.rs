//! Synthetic phantom and cohort generation with analytically known ground
//! truth, for end-to-end pipeline validation.
//!
//! A phantom is a soft-tissue ellipsoid containing a bone analog (a sphere
//! with a tangentially attached cylinder, both with a dense cortical shell
//! around a trabecular core) plus calibration rods of known density below
//! the body. Densities are hydroxyapatite-equivalent mg/cm^3. The HU volume
//! is `density / hu_slope` plus optional Gaussian noise, so a phantom-rod
//! calibration must recover `hu_slope`.
//!
//! The measurement region is a sphere whose boundary sits inside the
//! cortical shell, mirroring the clinical practice of keeping the ROI away
//! from the partial-volume rim; this keeps voxelized truth close to the
//! closed-form value.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::Path;

use crate::calibration::RodSample;
use crate::error::{Error, Result};
use crate::imaging::{atomic_write, Image2D, ImageUnit, Mask3D, Volume3D, VolumeUnit};
use crate::registration::RigidTransform6;

/// mg/cm^3 * mm -> g/cm^2, matching the DRR integrator.
const AREAL_SCALE: f64 = 1e-4;

/// Pose offsets stay inside these caps so desk-scale registration keeps the
/// target within its capture range.
pub const MAX_POSE_ROT_DEG: f64 = 10.0;
pub const MAX_POSE_TRANS_MM: f64 = 15.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
    pub density: f64,
}

/// Sphere-plus-cylinder bone analog. The cylinder starts tangentially on the
/// sphere surface along `neck_direction`; both carry a cortical shell of
/// `shell_thickness` (lateral only for the cylinder) around a trabecular
/// core. The measurement sphere has radius `pf_radius` around the head
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneSpec {
    pub head_center: [f64; 3],
    pub head_radius: f64,
    pub neck_direction: [f64; 3],
    pub neck_length: f64,
    pub neck_radius: f64,
    pub shell_thickness: f64,
    pub shell_density: f64,
    pub core_density: f64,
    pub pf_radius: f64,
}

/// Calibration rod: a cylinder along the z axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Rod {
    pub center: [f64; 3],
    pub radius: f64,
    pub half_length: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: (usize, usize, usize),
    pub spacing: (f64, f64, f64),
    pub origin: (f64, f64, f64),
    pub soft: Option<Ellipsoid>,
    pub bone: BoneSpec,
    pub rods: Vec<Rod>,
    /// (mg/cm^3) per HU; the generated HU volume is density / hu_slope.
    pub hu_slope: f64,
    pub noise_sigma_hu: f64,
    pub seed: u64,
}

/// A generated case with its analytic ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub hu: Volume3D,
    pub density: Volume3D,
    pub bone_mask: Mask3D,
    pub pf_mask: Mask3D,
    /// Mean density over the measurement mask, mg/cm^3.
    pub true_vbmd_mg_cm3: f64,
    /// Analytic areal density map of the measurement sphere, projected
    /// along +y onto the volume's x-z grid, g/cm^2.
    pub areal_map: Image2D,
    /// Measured rod ROI means paired with their known densities.
    pub rod_samples: Vec<RodSample>,
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = dot3(v, v).sqrt();
    if n == 0.0 {
        return Err(Error::InvalidConfig("zero-length direction".into()));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

impl PhantomSpec {
    /// A body-below-rods phantom proportioned to the given grid; densities
    /// use the defaults (core 300, shell 660, soft 60).
    pub fn default_for_grid(dims: (usize, usize, usize), spacing: f64, seed: u64) -> Self {
        let extent = [
            dims.0 as f64 * spacing,
            dims.1 as f64 * spacing,
            dims.2 as f64 * spacing,
        ];
        let l = extent[0].min(extent[1]).min(extent[2]);
        let c = [
            (dims.0 as f64 - 1.0) / 2.0 * spacing,
            (dims.1 as f64 - 1.0) / 2.0 * spacing,
            (dims.2 as f64 - 1.0) / 2.0 * spacing,
        ];
        let head_radius = 0.16 * l;
        let shell = 0.35 * head_radius;
        let rod_radius = 0.045 * l;
        let rod_y = c[1] - 0.35 * l - rod_radius - 0.03 * l;
        let rods = [-0.33, -0.11, 0.11, 0.33]
            .iter()
            .zip([0.0, 50.0, 100.0, 200.0])
            .map(|(&fx, density)| Rod {
                center: [c[0] + fx * l, rod_y, c[2]],
                radius: rod_radius,
                half_length: 0.3 * l,
                density,
            })
            .collect();
        Self {
            dims,
            spacing: (spacing, spacing, spacing),
            origin: (0.0, 0.0, 0.0),
            soft: Some(Ellipsoid {
                center: c,
                radii: [0.42 * l, 0.33 * l, 0.38 * l],
                density: 60.0,
            }),
            bone: BoneSpec {
                head_center: [c[0] + 0.08 * l, c[1], c[2] + 0.06 * l],
                head_radius,
                neck_direction: [0.8, 0.0, 0.6],
                neck_length: 0.24 * l,
                neck_radius: 0.055 * l,
                shell_thickness: shell,
                shell_density: 660.0,
                core_density: 300.0,
                // Measurement boundary sits inside the uniform shell, away
                // from the partial-volume rim.
                pf_radius: head_radius - 0.6 * shell,
            },
            rods,
            hu_slope: 0.75,
            noise_sigma_hu: 5.0,
            seed,
        }
    }

    fn physical_bounds(&self) -> ([f64; 3], [f64; 3]) {
        let (sx, sy, sz) = self.spacing;
        let (ox, oy, oz) = self.origin;
        let lo = [ox - 0.5 * sx, oy - 0.5 * sy, oz - 0.5 * sz];
        let hi = [
            ox + (self.dims.0 as f64 - 0.5) * sx,
            oy + (self.dims.1 as f64 - 0.5) * sy,
            oz + (self.dims.2 as f64 - 0.5) * sz,
        ];
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.0 == 0 || self.dims.1 == 0 || self.dims.2 == 0 {
            return Err(Error::InvalidConfig("phantom dims must be positive".into()));
        }
        if !(self.spacing.0 > 0.0 && self.spacing.1 > 0.0 && self.spacing.2 > 0.0) {
            return Err(Error::InvalidConfig("phantom spacing must be > 0".into()));
        }
        if !(self.hu_slope > 0.0) {
            return Err(Error::InvalidConfig("hu_slope must be > 0".into()));
        }
        if self.noise_sigma_hu < 0.0 {
            return Err(Error::InvalidConfig("noise sigma must be >= 0".into()));
        }
        let b = &self.bone;
        for (name, d) in [
            ("shell_density", b.shell_density),
            ("core_density", b.core_density),
        ] {
            if d < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0")));
            }
        }
        if let Some(soft) = &self.soft {
            if soft.density < 0.0 {
                return Err(Error::InvalidConfig("soft density must be >= 0".into()));
            }
        }
        if !(b.head_radius > 0.0)
            || !(b.neck_radius > 0.0)
            || !(b.neck_length > 0.0)
            || !(b.shell_thickness > 0.0)
            || b.shell_thickness >= b.head_radius
        {
            return Err(Error::InvalidConfig("bone geometry is inconsistent".into()));
        }
        if !(b.pf_radius > 0.0) || b.pf_radius > b.head_radius {
            return Err(Error::InvalidConfig(format!(
                "pf_radius {} must lie in (0, head_radius {}]",
                b.pf_radius, b.head_radius
            )));
        }
        let (lo, hi) = self.physical_bounds();
        let inside = |p: [f64; 3], margin: f64, what: &str| -> Result<()> {
            for ax in 0..3 {
                if p[ax] - margin < lo[ax] || p[ax] + margin > hi[ax] {
                    return Err(Error::InvalidConfig(format!(
                        "{what} extends outside the volume on axis {ax}"
                    )));
                }
            }
            Ok(())
        };
        inside(b.head_center, b.head_radius, "bone head")?;
        let dir = normalize(b.neck_direction)?;
        let base = [
            b.head_center[0] + b.head_radius * dir[0],
            b.head_center[1] + b.head_radius * dir[1],
            b.head_center[2] + b.head_radius * dir[2],
        ];
        let tip = [
            base[0] + b.neck_length * dir[0],
            base[1] + b.neck_length * dir[1],
            base[2] + b.neck_length * dir[2],
        ];
        inside(base, b.neck_radius, "neck base")?;
        inside(tip, b.neck_radius, "neck tip")?;
        if let Some(soft) = &self.soft {
            for ax in 0..3 {
                if soft.center[ax] - soft.radii[ax] < lo[ax]
                    || soft.center[ax] + soft.radii[ax] > hi[ax]
                {
                    return Err(Error::InvalidConfig(
                        "soft ellipsoid extends outside the volume".into(),
                    ));
                }
            }
        }
        for (i, rod) in self.rods.iter().enumerate() {
            if rod.density < 0.0 || !(rod.radius > 0.0) || !(rod.half_length > 0.0) {
                return Err(Error::InvalidConfig(format!("rod {i} is inconsistent")));
            }
            for (ax, margin) in [rod.radius, rod.radius, rod.half_length].iter().enumerate() {
                if rod.center[ax] - margin < lo[ax] || rod.center[ax] + margin > hi[ax] {
                    return Err(Error::InvalidConfig(format!(
                        "rod {i} extends outside the volume on axis {ax}"
                    )));
                }
            }
            for (j, other) in self.rods.iter().enumerate().skip(i + 1) {
                let dx = rod.center[0] - other.center[0];
                let dy = rod.center[1] - other.center[1];
                if (dx * dx + dy * dy).sqrt() <= rod.radius + other.radius {
                    return Err(Error::InvalidConfig(format!("rods {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// Pointwise material lookup used by the supersampled voxelizer.
struct Materials<'a> {
    spec: &'a PhantomSpec,
    neck_dir: [f64; 3],
    neck_base: [f64; 3],
}

impl<'a> Materials<'a> {
    fn new(spec: &'a PhantomSpec) -> Result<Self> {
        let dir = normalize(spec.bone.neck_direction)?;
        let b = &spec.bone;
        let neck_base = [
            b.head_center[0] + b.head_radius * dir[0],
            b.head_center[1] + b.head_radius * dir[1],
            b.head_center[2] + b.head_radius * dir[2],
        ];
        Ok(Self {
            spec,
            neck_dir: dir,
            neck_base,
        })
    }

    fn in_head(&self, p: [f64; 3]) -> Option<bool> {
        let b = &self.spec.bone;
        let d = sub3(p, b.head_center);
        let r2 = dot3(d, d);
        if r2 > b.head_radius * b.head_radius {
            return None;
        }
        let inner = b.head_radius - b.shell_thickness;
        Some(r2 >= inner * inner)
    }

    fn in_neck(&self, p: [f64; 3]) -> Option<bool> {
        let b = &self.spec.bone;
        let rel = sub3(p, self.neck_base);
        let axial = dot3(rel, self.neck_dir);
        if !(0.0..=b.neck_length).contains(&axial) {
            return None;
        }
        let radial2 = dot3(rel, rel) - axial * axial;
        if radial2 > b.neck_radius * b.neck_radius {
            return None;
        }
        let inner = (b.neck_radius - b.shell_thickness).max(0.0);
        Some(radial2 >= inner * inner)
    }

    fn in_bone(&self, p: [f64; 3]) -> Option<bool> {
        // Shell wins when the point is in both primitives' shells.
        match (self.in_head(p), self.in_neck(p)) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(false) || b.unwrap_or(false)),
        }
    }

    fn in_pf(&self, p: [f64; 3]) -> bool {
        let b = &self.spec.bone;
        let d = sub3(p, b.head_center);
        dot3(d, d) <= b.pf_radius * b.pf_radius
    }

    fn density_at(&self, p: [f64; 3]) -> f64 {
        for rod in &self.spec.rods {
            let dx = p[0] - rod.center[0];
            let dy = p[1] - rod.center[1];
            if dx * dx + dy * dy <= rod.radius * rod.radius
                && (p[2] - rod.center[2]).abs() <= rod.half_length
            {
                return rod.density;
            }
        }
        if let Some(shell) = self.in_bone(p) {
            return if shell {
                self.spec.bone.shell_density
            } else {
                self.spec.bone.core_density
            };
        }
        if let Some(soft) = &self.spec.soft {
            let d = sub3(p, soft.center);
            let q = (d[0] / soft.radii[0]).powi(2)
                + (d[1] / soft.radii[1]).powi(2)
                + (d[2] / soft.radii[2]).powi(2);
            if q <= 1.0 {
                return soft.density;
            }
        }
        0.0
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Voxelizes the phantom with 2x2x2 supersampling (partial-volume density
/// at material boundaries, center-point masks), derives the HU volume and
/// truth values. Deterministic per seed.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<SyntheticCase> {
    spec.validate()?;
    let materials = Materials::new(spec)?;
    let (nx, ny, nz) = spec.dims;
    let (sx, sy, sz) = spec.spacing;
    let (ox, oy, oz) = spec.origin;

    struct Slice {
        density: Vec<f64>,
        bone: Vec<f64>,
        pf: Vec<f64>,
    }
    let slices: Vec<Slice> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut density = Vec::with_capacity(nx * ny);
            let mut bone = Vec::with_capacity(nx * ny);
            let mut pf = Vec::with_capacity(nx * ny);
            for j in 0..ny {
                for i in 0..nx {
                    let c = [
                        ox + i as f64 * sx,
                        oy + j as f64 * sy,
                        oz + k as f64 * sz,
                    ];
                    let mut rho = 0.0;
                    for s in 0..8u8 {
                        let p = [
                            c[0] + ((s & 1) as f64 - 0.5) * sx / 2.0,
                            c[1] + (((s >> 1) & 1) as f64 - 0.5) * sy / 2.0,
                            c[2] + (((s >> 2) & 1) as f64 - 0.5) * sz / 2.0,
                        ];
                        rho += materials.density_at(p);
                    }
                    density.push(rho / 8.0);
                    // Masks are crisp: voxel membership by center point.
                    bone.push(if materials.in_bone(c).is_some() { 1.0 } else { 0.0 });
                    pf.push(if materials.in_pf(c) { 1.0 } else { 0.0 });
                }
            }
            Slice { density, bone, pf }
        })
        .collect();

    let n = nx * ny * nz;
    let mut density = Vec::with_capacity(n);
    let mut bone = Vec::with_capacity(n);
    let mut pf = Vec::with_capacity(n);
    for s in slices {
        density.extend(s.density);
        bone.extend(s.bone);
        pf.extend(s.pf);
    }

    // HU derivation and noise in fixed voxel order.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let hu: Vec<f64> = density
        .iter()
        .map(|&rho| {
            let base = rho / spec.hu_slope;
            if spec.noise_sigma_hu > 0.0 {
                base + spec.noise_sigma_hu * standard_normal(&mut rng)
            } else {
                base
            }
        })
        .collect();

    let density_vol = Volume3D::new(
        spec.dims,
        spec.spacing,
        spec.origin,
        VolumeUnit::DensityMgCm3,
        density,
    )?;
    let hu_vol = density_vol.with_values(VolumeUnit::Hounsfield, hu)?;
    let bone_mask = Mask3D::from_volume(density_vol.with_values(VolumeUnit::Dimensionless, bone)?)?;
    let pf_mask = Mask3D::from_volume(density_vol.with_values(VolumeUnit::Dimensionless, pf)?)?;

    // Truth: mask-weighted mean of the voxelized density.
    let pf_count = pf_mask.count();
    if pf_count == 0 {
        return Err(Error::InvalidConfig(
            "measurement sphere covers no voxels at this resolution".into(),
        ));
    }
    let pf_sum: f64 = density_vol
        .values()
        .iter()
        .zip(pf_mask.as_volume().values())
        .map(|(d, m)| d * m)
        .sum();
    let true_vbmd = pf_sum / pf_count as f64;

    // Analytic areal map of the measurement sphere projected along +y.
    let b = &spec.bone;
    let inner = b.head_radius - b.shell_thickness;
    let core_r = inner.min(b.pf_radius);
    let chord = |r: f64, b2: f64| -> f64 {
        if b2 < r * r {
            2.0 * (r * r - b2).sqrt()
        } else {
            0.0
        }
    };
    let mut areal = Vec::with_capacity(nx * nz);
    for k in 0..nz {
        for i in 0..nx {
            let x = ox + i as f64 * sx;
            let z = oz + k as f64 * sz;
            let b2 = (x - b.head_center[0]).powi(2) + (z - b.head_center[2]).powi(2);
            let len_core = chord(core_r, b2);
            let len_shell = chord(b.pf_radius, b2) - len_core;
            areal.push((b.core_density * len_core + b.shell_density * len_shell) * AREAL_SCALE);
        }
    }
    let areal_map = Image2D::new((nx, nz), (sx, sz), ImageUnit::ArealGCm2, areal)?;

    // Rod ROI means from the HU volume, eroded away from the rim.
    let mut rod_samples = Vec::with_capacity(spec.rods.len());
    for (idx, rod) in spec.rods.iter().enumerate() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for k in 0..nz {
            let z = oz + k as f64 * sz;
            if (z - rod.center[2]).abs() > 0.7 * rod.half_length {
                continue;
            }
            for j in 0..ny {
                let y = oy + j as f64 * sy;
                for i in 0..nx {
                    let x = ox + i as f64 * sx;
                    let dx = x - rod.center[0];
                    let dy = y - rod.center[1];
                    if (dx * dx + dy * dy).sqrt() <= 0.7 * rod.radius {
                        sum += hu_vol.at(i, j, k);
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return Err(Error::InvalidConfig(format!(
                "rod {idx} covers no voxels at this resolution"
            )));
        }
        rod_samples.push(RodSample {
            rod_id: format!("rod{idx}"),
            hu_mean: sum / count as f64,
            density_mg_cm3: rod.density,
        });
    }

    Ok(SyntheticCase {
        hu: hu_vol,
        density: density_vol,
        bone_mask,
        pf_mask,
        true_vbmd_mg_cm3: true_vbmd,
        areal_map,
        rod_samples,
    })
}

/// The canonical parallel geometry matching [`SyntheticCase::areal_map`]:
/// rays along +y onto the volume's x-z grid.
pub fn canonical_geometry(volume: &Volume3D, step_mm: f64) -> crate::projection::ProjectionGeometry {
    let c = volume.centroid();
    let (sx, _, sz) = volume.spacing();
    let (nx, _, nz) = volume.dims();
    crate::projection::ProjectionGeometry {
        mode: crate::projection::ProjectionMode::Parallel,
        detector_dims: (nx, nz),
        detector_spacing: (sx, sz),
        detector_center: [c[0], volume.origin().1 - 10.0, c[2]],
        basis_u: [1.0, 0.0, 0.0],
        basis_v: [0.0, 0.0, 1.0],
        ray_dir: Some([0.0, 1.0, 0.0]),
        source: None,
        step_mm,
    }
}

/// One cohort member: a phantom spec plus its pose set and drawn density.
#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub case_id: String,
    pub phantom: PhantomSpec,
    pub poses: Vec<(String, RigidTransform6)>,
    pub core_density: f64,
}

#[derive(Debug, Clone)]
pub struct CohortSpec {
    pub n_cases: usize,
    /// Uniform range for the trabecular core density draw (mg/cm^3).
    pub core_density_range: (f64, f64),
    /// Cortical shell density as a multiple of the drawn core density.
    pub shell_ratio: f64,
    /// Uniform per-pose rotation jitter, degrees.
    pub rot_jitter_deg: f64,
    /// Uniform per-pose translation jitter, mm.
    pub trans_jitter_mm: f64,
    /// Multiplier on the base pose offsets; 0 collapses all four poses onto
    /// the identity.
    pub pose_scale: f64,
    /// Template phantom; densities and seed are overridden per case.
    pub base: PhantomSpec,
    pub seed: u64,
}

/// Base offsets of the four acquisition poses.
fn base_poses() -> [(&'static str, [f64; 6]); 4] {
    [
        ("standing", [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ("supine", [8.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ("abduction", [0.0, 0.0, 7.0, 0.0, 0.0, 0.0]),
        ("adduction", [0.0, 0.0, -7.0, 0.0, 0.0, 0.0]),
    ]
}

fn split_mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(tag.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cases == 0 {
            return Err(Error::InvalidConfig("cohort needs >= 1 case".into()));
        }
        let (lo, hi) = self.core_density_range;
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::InvalidConfig(format!(
                "invalid density range [{lo}, {hi}]"
            )));
        }
        if !(self.shell_ratio >= 1.0) {
            return Err(Error::InvalidConfig("shell_ratio must be >= 1".into()));
        }
        if !(0.0..=1.25).contains(&self.pose_scale) {
            return Err(Error::InvalidConfig(format!(
                "pose_scale {} outside [0, 1.25]",
                self.pose_scale
            )));
        }
        let max_base_rot = 8.0 * self.pose_scale;
        if self.rot_jitter_deg < 0.0 || max_base_rot + self.rot_jitter_deg > MAX_POSE_ROT_DEG {
            return Err(Error::InvalidConfig(format!(
                "rotation jitter {} pushes poses past {} degrees",
                self.rot_jitter_deg, MAX_POSE_ROT_DEG
            )));
        }
        if self.trans_jitter_mm < 0.0 || self.trans_jitter_mm > MAX_POSE_TRANS_MM {
            return Err(Error::InvalidConfig(format!(
                "translation jitter {} exceeds {} mm",
                self.trans_jitter_mm, MAX_POSE_TRANS_MM
            )));
        }
        self.base.validate()
    }

    /// A small-but-representative default cohort on an n^3 grid.
    pub fn default_desk(n_cases: usize, grid: usize, spacing: f64, seed: u64) -> Self {
        Self {
            n_cases,
            core_density_range: (150.0, 450.0),
            shell_ratio: 2.2,
            rot_jitter_deg: 2.0,
            trans_jitter_mm: 3.0,
            pose_scale: 1.0,
            base: PhantomSpec::default_for_grid((grid, grid, grid), spacing, seed),
            seed,
        }
    }
}

/// Draws per-case densities and pose jitters; phantom volumes are
/// materialized lazily via [`generate_phantom`] on each returned spec.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<CaseSpec>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(split_mix(spec.seed, 0));
    let (lo, hi) = spec.core_density_range;
    let mut cases = Vec::with_capacity(spec.n_cases);
    for idx in 0..spec.n_cases {
        let core = lo + rng.random::<f64>() * (hi - lo);
        let mut phantom = spec.base.clone();
        phantom.bone.core_density = core;
        phantom.bone.shell_density = core * spec.shell_ratio;
        phantom.seed = split_mix(spec.seed, 1000 + idx as u64);
        let mut poses = Vec::new();
        for (name, base) in base_poses() {
            let mut p = base.map(|v| v * spec.pose_scale);
            for (slot, v) in p.iter_mut().enumerate() {
                let jitter = if slot < 3 {
                    spec.rot_jitter_deg
                } else {
                    spec.trans_jitter_mm
                };
                *v += (rng.random::<f64>() * 2.0 - 1.0) * jitter;
            }
            poses.push((name.to_string(), RigidTransform6::from_array(p)));
        }
        cases.push(CaseSpec {
            case_id: format!("case_{idx:04}"),
            phantom,
            poses,
            core_density: core,
        });
    }
    Ok(cases)
}

/// Writes a case directory: HU and density volumes, masks, pose table,
/// truth table and the rod ROI table.
pub fn write_case(case_spec: &CaseSpec, case: &SyntheticCase, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    crate::imaging::write_volume(&case.hu, &dir.join("volume.v3h"))?;
    crate::imaging::write_volume(&case.density, &dir.join("density.v3h"))?;
    crate::imaging::write_volume(case.bone_mask.as_volume(), &dir.join("mask_bone.v3h"))?;
    crate::imaging::write_volume(case.pf_mask.as_volume(), &dir.join("mask_pf.v3h"))?;
    let mut poses = String::from("pose,rx_deg,ry_deg,rz_deg,tx_mm,ty_mm,tz_mm\n");
    for (name, pose) in &case_spec.poses {
        let p = pose.to_array();
        poses.push_str(&format!(
            "{name},{},{},{},{},{},{}\n",
            p[0], p[1], p[2], p[3], p[4], p[5]
        ));
    }
    atomic_write(&dir.join("poses.csv"), poses.as_bytes())?;
    let truth = format!(
        "case_id,vbmd_mg_cm3,abmd_mean_g_cm2\n{},{},{}\n",
        case_spec.case_id,
        case.true_vbmd_mg_cm3,
        case.areal_map.mean()
    );
    atomic_write(&dir.join("truth.csv"), truth.as_bytes())?;
    crate::calibration::write_rod_table(&case.rod_samples, &dir.join("rods.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::fit_from_rod_table;
    use crate::projection::render_drr;

    fn small_spec(seed: u64) -> PhantomSpec {
        PhantomSpec::default_for_grid((32, 32, 32), 2.0, seed)
    }

    #[test]
    fn zero_density_spec_gives_zero_volumes_with_masks() {
        let mut spec = small_spec(1);
        spec.bone.core_density = 0.0;
        spec.bone.shell_density = 0.0;
        spec.soft.as_mut().unwrap().density = 0.0;
        for rod in &mut spec.rods {
            rod.density = 0.0;
        }
        spec.noise_sigma_hu = 0.0;
        let case = generate_phantom(&spec).unwrap();
        assert!(case.density.values().iter().all(|&v| v == 0.0));
        assert!(case.hu.values().iter().all(|&v| v == 0.0));
        assert!(case.bone_mask.count() > 0);
        assert!(case.pf_mask.count() > 0);
        assert_eq!(case.true_vbmd_mg_cm3, 0.0);
    }

    #[test]
    fn truth_is_mask_weighted_mean() {
        let case = generate_phantom(&small_spec(2)).unwrap();
        let sum: f64 = case
            .density
            .values()
            .iter()
            .zip(case.pf_mask.as_volume().values())
            .map(|(d, m)| d * m)
            .sum();
        let mean = sum / case.pf_mask.count() as f64;
        assert!((case.true_vbmd_mg_cm3 - mean).abs() < 1e-9);
    }

    #[test]
    fn truth_matches_closed_form_volumes() {
        // Fine grid and generous margins between the measurement boundary
        // and both material interfaces, so voxelization error stays well
        // under the tolerance.
        let mut spec = PhantomSpec::default_for_grid((64, 64, 64), 1.0, 3);
        spec.bone.head_radius = 14.0;
        spec.bone.shell_thickness = 5.0;
        spec.bone.pf_radius = 11.5;
        spec.bone.neck_length = 10.0;
        spec.bone.core_density = 300.0;
        spec.bone.shell_density = 800.0;
        spec.noise_sigma_hu = 0.0;
        let case = generate_phantom(&spec).unwrap();
        let b = &spec.bone;
        let inner = b.head_radius - b.shell_thickness;
        let core_r = inner.min(b.pf_radius);
        let v = |r: f64| 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        let analytic = (300.0 * v(core_r) + 800.0 * (v(b.pf_radius) - v(core_r))) / v(b.pf_radius);
        assert!(case.true_vbmd_mg_cm3 > 300.0 && case.true_vbmd_mg_cm3 < 800.0);
        let rel = (case.true_vbmd_mg_cm3 - analytic).abs() / analytic;
        assert!(rel < 0.005, "relative error {rel}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_phantom(&small_spec(77)).unwrap();
        let b = generate_phantom(&small_spec(77)).unwrap();
        for (x, y) in a.hu.values().iter().zip(b.hu.values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.density.values().iter().zip(b.density.values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.true_vbmd_mg_cm3.to_bits(), b.true_vbmd_mg_cm3.to_bits());
    }

    #[test]
    fn masked_render_mean_matches_analytic_areal_map() {
        let mut spec = PhantomSpec::default_for_grid((48, 48, 48), 1.25, 4);
        spec.bone.head_radius = 12.0;
        spec.bone.shell_thickness = 4.5;
        spec.bone.pf_radius = 9.3;
        spec.noise_sigma_hu = 0.0;
        let case = generate_phantom(&spec).unwrap();
        let geom = canonical_geometry(&case.density, 0.25);
        let drr = render_drr(
            &case.density,
            Some(&case.pf_mask),
            &geom,
            &RigidTransform6::identity(),
        )
        .unwrap();
        let rendered_mean = drr.mean();
        let analytic_mean = case.areal_map.mean();
        let rel = (rendered_mean - analytic_mean).abs() / analytic_mean;
        assert!(rel < 0.01, "relative error {rel}");
    }

    #[test]
    fn noise_free_rods_recover_hu_slope() {
        let mut spec = small_spec(5);
        spec.noise_sigma_hu = 0.0;
        let case = generate_phantom(&spec).unwrap();
        let line = fit_from_rod_table(&case.rod_samples).unwrap();
        let rel = (line.slope - spec.hu_slope).abs() / spec.hu_slope;
        assert!(rel < 1e-6, "slope {} vs {}", line.slope, spec.hu_slope);
        assert!(line.intercept.abs() < 1e-6);
    }

    #[test]
    fn cohort_draws_center_on_range_midpoint() {
        let spec = CohortSpec::default_desk(50, 16, 4.0, 11);
        let cases = generate_cohort(&spec).unwrap();
        assert_eq!(cases.len(), 50);
        let mean: f64 = cases.iter().map(|c| c.core_density).sum::<f64>() / 50.0;
        let mid = 300.0;
        assert!(
            (mean - mid).abs() / mid < 0.05,
            "sample mean {mean} vs midpoint {mid}"
        );
    }

    #[test]
    fn zero_jitter_poses_repeat_base_offsets() {
        let mut spec = CohortSpec::default_desk(1, 16, 4.0, 12);
        spec.rot_jitter_deg = 0.0;
        spec.trans_jitter_mm = 0.0;
        let cases = generate_cohort(&spec).unwrap();
        let poses = &cases[0].poses;
        assert_eq!(poses.len(), 4);
        assert_eq!(poses[0].1, RigidTransform6::identity());
        assert_eq!(poses[1].1, RigidTransform6::new(8.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_pose_offsets_give_identical_projections() {
        let mut spec = CohortSpec::default_desk(1, 16, 4.0, 14);
        spec.pose_scale = 0.0;
        spec.rot_jitter_deg = 0.0;
        spec.trans_jitter_mm = 0.0;
        let cases = generate_cohort(&spec).unwrap();
        assert_eq!(cases[0].poses.len(), 4);
        let case = generate_phantom(&cases[0].phantom).unwrap();
        let geom = canonical_geometry(&case.density, 1.0);
        let reference = render_drr(&case.density, None, &geom, &cases[0].poses[0].1).unwrap();
        for (_, pose) in &cases[0].poses[1..] {
            let drr = render_drr(&case.density, None, &geom, pose).unwrap();
            for (a, b) in reference.values().iter().zip(drr.values()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn disjoint_seeds_make_disjoint_draws() {
        let a = generate_cohort(&CohortSpec::default_desk(40, 16, 4.0, 100)).unwrap();
        let b = generate_cohort(&CohortSpec::default_desk(40, 16, 4.0, 101)).unwrap();
        for ca in &a {
            for cb in &b {
                assert_ne!(ca.core_density.to_bits(), cb.core_density.to_bits());
            }
        }
    }

    #[test]
    fn cohort_rejects_out_of_range_jitter() {
        let mut spec = CohortSpec::default_desk(1, 16, 4.0, 1);
        spec.rot_jitter_deg = 5.0;
        assert!(generate_cohort(&spec).is_err());
    }

    #[test]
    fn write_case_produces_expected_tree() {
        let spec = CohortSpec::default_desk(1, 16, 4.0, 13);
        let cases = generate_cohort(&spec).unwrap();
        let case = generate_phantom(&cases[0].phantom).unwrap();
        let dir = std::env::temp_dir().join(format!("bmdkit-case-{}", std::process::id()));
        write_case(&cases[0], &case, &dir).unwrap();
        for file in [
            "volume.v3h",
            "volume.v3r",
            "density.v3h",
            "mask_bone.v3h",
            "mask_pf.v3h",
            "poses.csv",
            "truth.csv",
            "rods.csv",
        ] {
            assert!(dir.join(file).exists(), "{file} missing");
        }
        let vol = crate::imaging::read_volume(&dir.join("volume.v3h")).unwrap();
        assert_eq!(vol.unit(), VolumeUnit::Hounsfield);
    }
}
