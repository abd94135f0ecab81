use std::path::Path;

use crate::commands::{parse_pose, pose_from_table};
use crate::{CliError, CliResult};
use bmdkit::imaging::{read_volume, write_image, Mask3D};
use bmdkit::projection::{render_drr, ProjectionGeometry};

#[allow(clippy::too_many_arguments)]
pub fn run(
    volume_path: &Path,
    mask_path: Option<&Path>,
    geometry_path: &Path,
    pose_text: Option<&str>,
    pose_file: Option<&Path>,
    pose_name: Option<&str>,
    out: &Path,
) -> CliResult {
    let geometry = ProjectionGeometry::from_config(geometry_path).map_err(CliError::from)?;
    let pose = match (pose_text, pose_file, pose_name) {
        (Some(text), None, None) => parse_pose(text)?,
        (None, Some(file), Some(name)) => pose_from_table(file, name)?,
        _ => {
            return Err(CliError::Data(
                "supply either --pose or --pose-file with --pose-name".into(),
            ))
        }
    };
    let volume = read_volume(volume_path).map_err(CliError::from)?;
    let mask = match mask_path {
        Some(p) => Some(Mask3D::from_volume(read_volume(p).map_err(CliError::from)?).map_err(CliError::from)?),
        None => None,
    };
    let drr = render_drr(&volume, mask.as_ref(), &geometry, &pose).map_err(CliError::from)?;
    crate::commands::ensure_parent(out)?;
    write_image(&drr, out).map_err(CliError::from)?;
    Ok(())
}
