use std::path::Path;

use crate::commands::{parse_pose, write_atomic};
use crate::config::RunConfig;
use crate::{CliError, CliResult};
use bmdkit::imaging::{read_image, read_volume, Mask3D};
use bmdkit::projection::ProjectionGeometry;
use bmdkit::registration::{register_2d3d, CmaConfig};

pub fn run(
    config_path: &Path,
    xray_path: &Path,
    volume_path: &Path,
    mask_path: Option<&Path>,
    init_text: &str,
    out: &Path,
) -> CliResult {
    let config = RunConfig::load(config_path)?;
    let seed = config.seed()?;
    let geometry_path = config.existing_path("geometry")?;
    let geometry = ProjectionGeometry::from_config(&geometry_path).map_err(CliError::from)?;
    let sigma_rot = config.f64_or("cma_sigma_rot_deg", 2.0)?;
    let sigma_trans = config.f64_or("cma_sigma_trans_mm", 2.0)?;
    let cma = CmaConfig {
        population: config.opt_usize("cma_population")?,
        scales: vec![
            sigma_rot,
            sigma_rot,
            sigma_rot,
            sigma_trans,
            sigma_trans,
            sigma_trans,
        ],
        max_evaluations: config.usize_or("cma_max_evaluations", 3000)?,
        tol_sigma: config.f64_or("cma_tol_sigma", 1e-5)?,
        tol_fun: config.f64_or("cma_tol_fun", 1e-12)?,
        seed,
    };
    let init = parse_pose(init_text)?;
    let xray = read_image(xray_path).map_err(CliError::from)?;
    let volume = read_volume(volume_path).map_err(CliError::from)?;
    let mask = match mask_path {
        Some(p) => Some(
            Mask3D::from_volume(read_volume(p).map_err(CliError::from)?)
                .map_err(CliError::from)?,
        ),
        None => None,
    };
    let result =
        register_2d3d(&xray, &volume, mask.as_ref(), &geometry, &init, &cma).map_err(CliError::from)?;
    let p = result.pose.to_array();
    write_atomic(
        out,
        &format!(
            "pose: {} {} {} {} {} {}\ngc: {}\nevaluations: {}\n",
            p[0], p[1], p[2], p[3], p[4], p[5], result.gc, result.evaluations
        ),
    )?;
    println!(
        "registered with gc {} after {} evaluations",
        result.gc, result.evaluations
    );
    Ok(())
}
