//! Bit-exact file I/O for volumes, images and masks.
//!
//! A volume is stored as a text header (`.v3h`) plus a raw little-endian
//! float payload (`.v3r`); images use `.i2h`/`.i2r`. The header holds one
//! `key: value` line per field:
//!
//! ```text
//! dims: 64 64 64
//! spacing: 2 2 2
//! origin: 0 0 0
//! unit: density_mg_cm3
//! dtype: f64le
//! data: volume.v3r
//! ```
//!
//! Writes emit `f64le` payloads so a write/read cycle is bit-identical for
//! any in-memory value; `f32le` payloads are accepted on read. All writes
//! go through a temp file followed by a rename.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::{Image2D, ImageUnit, Volume3D, VolumeUnit};

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{stem}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(bytes).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(io_err)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F32Le,
    F64Le,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32Le => 4,
            Dtype::F64Le => 8,
        }
    }
}

struct Header {
    entries: Vec<(String, String)>,
    path: PathBuf,
}

impl Header {
    fn parse(path: &Path, allowed: &[&str]) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                key: format!("line {}", lineno + 1),
                message: "expected `key: value`".into(),
            })?;
            let key = key.trim().to_string();
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    key,
                    message: "unknown header key".into(),
                });
            }
            entries.push((key, value.trim().to_string()));
        }
        Ok(Self {
            entries,
            path: path.to_path_buf(),
        })
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse {
                path: self.path.clone(),
                key: key.into(),
                message: "missing required key".into(),
            })
    }

    fn parse_err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            key: key.into(),
            message: message.into(),
        }
    }

    fn floats(&self, key: &str, n: usize) -> Result<Vec<f64>> {
        let raw = self.get(key)?;
        let vals: Vec<f64> = raw
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.parse_err(key, format!("bad float: {e}")))?;
        if vals.len() != n {
            return Err(self.parse_err(key, format!("expected {n} values, got {}", vals.len())));
        }
        Ok(vals)
    }

    fn usizes(&self, key: &str, n: usize) -> Result<Vec<usize>> {
        let raw = self.get(key)?;
        let vals: Vec<usize> = raw
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.parse_err(key, format!("bad integer: {e}")))?;
        if vals.len() != n {
            return Err(self.parse_err(key, format!("expected {n} values, got {}", vals.len())));
        }
        Ok(vals)
    }

    fn dtype(&self) -> Result<Dtype> {
        match self.get("dtype")? {
            "f32le" => Ok(Dtype::F32Le),
            "f64le" => Ok(Dtype::F64Le),
            other => Err(self.parse_err("dtype", format!("unsupported dtype `{other}`"))),
        }
    }

    /// Resolves the `data` entry relative to the header location and decodes
    /// the payload, checking the byte length against `n` scalars.
    fn payload(&self, n: usize) -> Result<Vec<f64>> {
        let rel = self.get("data")?;
        let dir = self.path.parent().unwrap_or_else(|| Path::new("."));
        let data_path = dir.join(rel);
        let dtype = self.dtype()?;
        let bytes = read_bytes(&data_path)?;
        if bytes.len() != n * dtype.size() {
            return Err(self.parse_err(
                "data",
                format!(
                    "payload {} holds {} bytes, expected {} ({} x {}-byte scalars)",
                    data_path.display(),
                    bytes.len(),
                    n * dtype.size(),
                    n,
                    dtype.size()
                ),
            ));
        }
        let values: Vec<f64> = match dtype {
            Dtype::F64Le => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F32Le => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(self.parse_err("data", format!("non-finite value at scalar index {i}")));
        }
        Ok(values)
    }
}

fn payload_path(header_path: &Path, ext: &str) -> (PathBuf, String) {
    let data_path = header_path.with_extension(ext);
    let name = data_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("data.{ext}"));
    (data_path, name)
}

fn encode_f64le(values: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Writes a volume as `<path>` (header) plus a sibling `.v3r` payload.
pub fn write_volume(volume: &Volume3D, header_path: &Path) -> Result<()> {
    let (data_path, data_name) = payload_path(header_path, "v3r");
    let (nx, ny, nz) = volume.dims();
    let (sx, sy, sz) = volume.spacing();
    let (ox, oy, oz) = volume.origin();
    let header = format!(
        "dims: {nx} {ny} {nz}\nspacing: {sx} {sy} {sz}\norigin: {ox} {oy} {oz}\nunit: {}\ndtype: f64le\ndata: {data_name}\n",
        volume.unit().as_str()
    );
    atomic_write(&data_path, &encode_f64le(volume.values()))?;
    atomic_write(header_path, header.as_bytes())
}

/// Reads a volume from its `.v3h` header.
pub fn read_volume(header_path: &Path) -> Result<Volume3D> {
    let header = Header::parse(
        header_path,
        &["dims", "spacing", "origin", "unit", "dtype", "data"],
    )?;
    let dims = header.usizes("dims", 3)?;
    let spacing = header.floats("spacing", 3)?;
    let origin = header.floats("origin", 3)?;
    let unit = VolumeUnit::parse(header.get("unit")?)
        .ok_or_else(|| header.parse_err("unit", "unknown volume unit"))?;
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| header.parse_err("dims", "dims overflow"))?;
    let values = header.payload(n)?;
    Volume3D::new(
        (dims[0], dims[1], dims[2]),
        (spacing[0], spacing[1], spacing[2]),
        (origin[0], origin[1], origin[2]),
        unit,
        values,
    )
}

/// Writes an image as `<path>` (header) plus a sibling `.i2r` payload.
pub fn write_image(image: &Image2D, header_path: &Path) -> Result<()> {
    let (data_path, data_name) = payload_path(header_path, "i2r");
    let (w, h) = image.dims();
    let (sx, sy) = image.spacing();
    let header = format!(
        "dims: {w} {h}\nspacing: {sx} {sy}\nunit: {}\ndtype: f64le\ndata: {data_name}\n",
        image.unit().as_str()
    );
    atomic_write(&data_path, &encode_f64le(image.values()))?;
    atomic_write(header_path, header.as_bytes())
}

/// Reads an image from its `.i2h` header.
pub fn read_image(header_path: &Path) -> Result<Image2D> {
    let header = Header::parse(header_path, &["dims", "spacing", "unit", "dtype", "data"])?;
    let dims = header.usizes("dims", 2)?;
    let spacing = header.floats("spacing", 2)?;
    let unit = ImageUnit::parse(header.get("unit")?)
        .ok_or_else(|| header.parse_err("unit", "unknown image unit"))?;
    let n = dims[0]
        .checked_mul(dims[1])
        .ok_or_else(|| header.parse_err("dims", "dims overflow"))?;
    let values = header.payload(n)?;
    Image2D::new((dims[0], dims[1]), (spacing[0], spacing[1]), unit, values)
}
