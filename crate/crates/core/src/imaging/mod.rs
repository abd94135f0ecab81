//! Volume and image containers with file I/O and X-ray preprocessing.
//!
//! Conventions: `Volume3D` values are laid out x-fastest, `Image2D` values
//! row-major. `origin` is the world position (mm) of the center of voxel
//! (0,0,0); the physical extent of a volume therefore runs half a voxel
//! beyond the first and last voxel centers on each axis.

mod io;
mod preprocess;

pub use io::{atomic_write, read_image, read_volume, write_image, write_volume};
pub use preprocess::{normalize_to_canvas, quantize_bits, split_xray};

use crate::error::{Error, Result};

/// Physical interpretation of volume voxel values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeUnit {
    Hounsfield,
    DensityMgCm3,
    Dimensionless,
}

impl VolumeUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            VolumeUnit::Hounsfield => "hounsfield",
            VolumeUnit::DensityMgCm3 => "density_mg_cm3",
            VolumeUnit::Dimensionless => "dimensionless",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hounsfield" => Some(VolumeUnit::Hounsfield),
            "density_mg_cm3" => Some(VolumeUnit::DensityMgCm3),
            "dimensionless" => Some(VolumeUnit::Dimensionless),
            _ => None,
        }
    }
}

/// Physical interpretation of image pixel values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageUnit {
    Dimensionless,
    ArealGCm2,
}

impl ImageUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageUnit::Dimensionless => "dimensionless",
            ImageUnit::ArealGCm2 => "areal_g_cm2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dimensionless" => Some(ImageUnit::Dimensionless),
            "areal_g_cm2" => Some(ImageUnit::ArealGCm2),
            _ => None,
        }
    }
}

/// A 3D scalar grid with spacing and origin metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    origin: (f64, f64, f64),
    unit: VolumeUnit,
    values: Vec<f64>,
}

impl Volume3D {
    pub fn new(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        origin: (f64, f64, f64),
        unit: VolumeUnit,
        values: Vec<f64>,
    ) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::Invariant(format!(
                "volume dims must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        let n = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::Invariant("volume dims overflow".into()))?;
        if values.len() != n {
            return Err(Error::DimMismatch(format!(
                "volume declares {n} voxels but holds {} values",
                values.len()
            )));
        }
        if !(spacing.0 > 0.0 && spacing.1 > 0.0 && spacing.2 > 0.0) {
            return Err(Error::Invariant(format!(
                "spacing must be strictly positive, got ({}, {}, {})",
                spacing.0, spacing.1, spacing.2
            )));
        }
        if !(origin.0.is_finite() && origin.1.is_finite() && origin.2.is_finite())
            || !(spacing.0.is_finite() && spacing.1.is_finite() && spacing.2.is_finite())
        {
            return Err(Error::Invariant("spacing/origin must be finite".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "volume value at linear index {i} is not finite"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            unit,
            values,
        })
    }

    /// Constant-valued volume, mainly for tests and synthesis.
    pub fn filled(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        origin: (f64, f64, f64),
        unit: VolumeUnit,
        value: f64,
    ) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        Self::new(dims, spacing, origin, unit, vec![value; n])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    pub fn origin(&self) -> (f64, f64, f64) {
        self.origin
    }

    pub fn unit(&self) -> VolumeUnit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// World position (mm) of the center of voxel (i, j, k).
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin.0 + i as f64 * self.spacing.0,
            self.origin.1 + j as f64 * self.spacing.1,
            self.origin.2 + k as f64 * self.spacing.2,
        ]
    }

    /// Geometric center of the physical extent, used as rotation center.
    pub fn centroid(&self) -> [f64; 3] {
        [
            self.origin.0 + self.spacing.0 * (self.dims.0 as f64 - 1.0) / 2.0,
            self.origin.1 + self.spacing.1 * (self.dims.1 as f64 - 1.0) / 2.0,
            self.origin.2 + self.spacing.2 * (self.dims.2 as f64 - 1.0) / 2.0,
        ]
    }

    /// Corners of the physical extent (half a voxel beyond the outermost
    /// voxel centers).
    pub fn physical_corners(&self) -> [[f64; 3]; 8] {
        let lo = [
            self.origin.0 - 0.5 * self.spacing.0,
            self.origin.1 - 0.5 * self.spacing.1,
            self.origin.2 - 0.5 * self.spacing.2,
        ];
        let hi = [
            self.origin.0 + (self.dims.0 as f64 - 0.5) * self.spacing.0,
            self.origin.1 + (self.dims.1 as f64 - 0.5) * self.spacing.1,
            self.origin.2 + (self.dims.2 as f64 - 0.5) * self.spacing.2,
        ];
        let mut corners = [[0.0; 3]; 8];
        for (c, corner) in corners.iter_mut().enumerate() {
            for ax in 0..3 {
                corner[ax] = if c >> ax & 1 == 0 { lo[ax] } else { hi[ax] };
            }
        }
        corners
    }

    /// Same grid and metadata, different values.
    pub fn with_values(&self, unit: VolumeUnit, values: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.origin, unit, values)
    }
}

/// A 2D scalar image (X-ray, DRR or derived map).
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    dims: (usize, usize),
    spacing: (f64, f64),
    unit: ImageUnit,
    values: Vec<f64>,
}

impl Image2D {
    pub fn new(
        dims: (usize, usize),
        spacing: (f64, f64),
        unit: ImageUnit,
        values: Vec<f64>,
    ) -> Result<Self> {
        let (w, h) = dims;
        if w == 0 || h == 0 {
            return Err(Error::Invariant(format!(
                "image dims must be positive, got {w}x{h}"
            )));
        }
        let n = w
            .checked_mul(h)
            .ok_or_else(|| Error::Invariant("image dims overflow".into()))?;
        if values.len() != n {
            return Err(Error::DimMismatch(format!(
                "image declares {n} pixels but holds {} values",
                values.len()
            )));
        }
        if !(spacing.0 > 0.0 && spacing.1 > 0.0) || !spacing.0.is_finite() || !spacing.1.is_finite()
        {
            return Err(Error::Invariant(format!(
                "pixel spacing must be strictly positive, got ({}, {})",
                spacing.0, spacing.1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "image value at linear index {i} is not finite"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            unit,
            values,
        })
    }

    pub fn filled(
        dims: (usize, usize),
        spacing: (f64, f64),
        unit: ImageUnit,
        value: f64,
    ) -> Result<Self> {
        Self::new(dims, spacing, unit, vec![value; dims.0 * dims.1])
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.0
    }

    pub fn height(&self) -> usize {
        self.dims.1
    }

    pub fn spacing(&self) -> (f64, f64) {
        self.spacing
    }

    pub fn unit(&self) -> ImageUnit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        x + self.dims.0 * y
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[self.index(x, y)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn with_values(&self, unit: ImageUnit, values: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.spacing, unit, values)
    }
}

/// Binary 3D region; stored as a volume whose values are exactly 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3D(Volume3D);

impl Mask3D {
    pub fn from_volume(volume: Volume3D) -> Result<Self> {
        if let Some(i) = volume.values().iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invariant(format!(
                "mask value at linear index {i} is {}, expected exactly 0.0 or 1.0",
                volume.values()[i]
            )));
        }
        Ok(Self(volume))
    }

    pub fn as_volume(&self) -> &Volume3D {
        &self.0
    }

    pub fn into_volume(self) -> Volume3D {
        self.0
    }

    /// Number of voxels inside the region.
    pub fn count(&self) -> usize {
        self.0.values().iter().filter(|&&v| v == 1.0).count()
    }

    /// Checks the mask grid matches its host volume voxel-for-voxel.
    pub fn matches(&self, host: &Volume3D) -> Result<()> {
        if self.0.dims() != host.dims() {
            return Err(Error::DimMismatch(format!(
                "mask dims {:?} do not match volume dims {:?}",
                self.0.dims(),
                host.dims()
            )));
        }
        Ok(())
    }
}

/// Binary 2D region; stored as an image whose values are exactly 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask2D(Image2D);

impl Mask2D {
    pub fn from_image(image: Image2D) -> Result<Self> {
        if let Some(i) = image.values().iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invariant(format!(
                "mask value at linear index {i} is {}, expected exactly 0.0 or 1.0",
                image.values()[i]
            )));
        }
        Ok(Self(image))
    }

    pub fn as_image(&self) -> &Image2D {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.values().iter().filter(|&&v| v == 1.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_rejects_length_mismatch() {
        let err = Volume3D::new(
            (2, 2, 2),
            (1.0, 1.0, 1.0),
            (0.0, 0.0, 0.0),
            VolumeUnit::Dimensionless,
            vec![7.0; 7],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimMismatch(_)));
    }

    #[test]
    fn volume_rejects_zero_spacing() {
        let err = Volume3D::filled(
            (2, 2, 2),
            (0.0, 1.0, 1.0),
            (0.0, 0.0, 0.0),
            VolumeUnit::Dimensionless,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn volume_rejects_non_finite() {
        let err = Volume3D::new(
            (1, 1, 2),
            (1.0, 1.0, 1.0),
            (0.0, 0.0, 0.0),
            VolumeUnit::Dimensionless,
            vec![1.0, f64::NAN],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn centroid_is_grid_center() {
        let v = Volume3D::filled(
            (3, 5, 7),
            (2.0, 1.0, 0.5),
            (10.0, 0.0, -3.0),
            VolumeUnit::Dimensionless,
            0.0,
        )
        .unwrap();
        assert_eq!(v.centroid(), [12.0, 2.0, -1.5]);
    }

    #[test]
    fn mask_rejects_non_binary() {
        let v = Volume3D::new(
            (1, 1, 2),
            (1.0, 1.0, 1.0),
            (0.0, 0.0, 0.0),
            VolumeUnit::Dimensionless,
            vec![0.0, 0.5],
        )
        .unwrap();
        assert!(Mask3D::from_volume(v).is_err());
    }

    #[test]
    fn x_fastest_indexing() {
        let mut values = vec![0.0; 24];
        let v0 = Volume3D::new(
            (2, 3, 4),
            (1.0, 1.0, 1.0),
            (0.0, 0.0, 0.0),
            VolumeUnit::Dimensionless,
            values.clone(),
        )
        .unwrap();
        values[v0.index(1, 2, 3)] = 9.0;
        assert_eq!(v0.index(1, 2, 3), 1 + 2 * (2 + 3 * 3));
    }
}
