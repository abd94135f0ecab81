use std::path::Path;

use crate::commands::write_atomic;
use crate::{CliError, CliResult};
use bmdkit::calibration::{apply_calibration, fit_from_rod_table, read_rod_table};
use bmdkit::imaging::{read_volume, write_volume};

pub fn run(rods: &Path, volume: &Path, out_volume: &Path, out_line: &Path) -> CliResult {
    let table = read_rod_table(rods).map_err(CliError::from)?;
    let line = fit_from_rod_table(&table).map_err(CliError::from)?;
    let hu = read_volume(volume).map_err(CliError::from)?;
    let density = apply_calibration(&hu, &line).map_err(CliError::from)?;
    crate::commands::ensure_parent(out_volume)?;
    write_volume(&density, out_volume).map_err(CliError::from)?;
    write_atomic(
        out_line,
        &format!(
            "slope: {}\nintercept: {}\nresidual_rmse: {}\nn_samples: {}\n",
            line.slope, line.intercept, line.residual_rmse, line.n_samples
        ),
    )?;
    println!(
        "calibration slope {} intercept {} over {} rods",
        line.slope, line.intercept, line.n_samples
    );
    Ok(())
}
