//! Flat `key = value` run configuration. Unknown keys are rejected so a
//! config file fully describes a run; `include` is deliberately unsupported.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::CliError;

pub struct RunConfig {
    path: PathBuf,
    entries: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "cohort_dir",
    "output_dir",
    "geometry",
    "seed",
    "synth_cases",
    "synth_grid",
    "synth_spacing_mm",
    "synth_density_lo",
    "synth_density_hi",
    "synth_shell_ratio",
    "synth_rot_jitter_deg",
    "synth_trans_jitter_mm",
    "synth_noise_sigma_hu",
    "cma_population",
    "cma_sigma_rot_deg",
    "cma_sigma_trans_mm",
    "cma_max_evaluations",
    "cma_tol_sigma",
    "cma_tol_fun",
    "threshold_grid_size",
    "dice_thresholds",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Data(format!(
                    "{} line {}: expected `key = value`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Data(format!(
                    "{}: unknown config key `{key}`",
                    path.display()
                )));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    fn raw(&self, key: &str) -> Result<&str, CliError> {
        self.entries.get(key).map(|s| s.as_str()).ok_or_else(|| {
            CliError::Data(format!(
                "{}: missing required config key `{key}`",
                self.path.display()
            ))
        })
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.raw("seed")?.parse::<u64>().map_err(|e| {
            CliError::Data(format!("{}: bad seed: {e}", self.path.display()))
        })
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().map_err(|e| {
                CliError::Data(format!("{}: bad `{key}`: {e}", self.path.display()))
            }),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<usize>().map_err(|e| {
                CliError::Data(format!("{}: bad `{key}`: {e}", self.path.display()))
            }),
        }
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<usize>().map(Some).map_err(|e| {
                CliError::Data(format!("{}: bad `{key}`: {e}", self.path.display()))
            }),
        }
    }

    /// A path-valued key, resolved relative to the config file and required
    /// to exist (for inputs) at validation time.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let p = self.any_path(key)?;
        if !p.exists() {
            return Err(CliError::Data(format!(
                "{}: `{key}` points to missing path {}",
                self.path.display(),
                p.display()
            )));
        }
        Ok(p)
    }

    /// A path-valued key resolved relative to the config file; may not
    /// exist yet (output locations).
    pub fn any_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let raw = self.raw(key)?;
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            Ok(p)
        } else {
            Ok(self
                .path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p))
        }
    }

    /// Dice thresholds as fractions of the ground-truth maximum.
    pub fn dice_fractions(&self) -> Result<Vec<f64>, CliError> {
        match self.entries.get("dice_thresholds") {
            None => Ok(vec![0.10, 0.25, 0.50, 0.75]),
            Some(v) => v
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|e| {
                        CliError::Data(format!(
                            "{}: bad `dice_thresholds`: {e}",
                            self.path.display()
                        ))
                    })
                })
                .collect(),
        }
    }
}
