//! BMD pipeline CLI.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 numerical failure. All outputs are written atomically and contain no
//! timestamps, so identically seeded runs are byte-identical.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "bmdkit",
    about = "X-ray BMD estimation pipeline: synthetic cohorts, QCT calibration, DRR projection, 2D-3D registration, BMD derivation and evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with known ground truth.
    Synth {
        /// Run config (`key = value`); uses the synth_* keys, seed and cohort_dir.
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a rod calibration line and convert a CT volume to density.
    Calibrate {
        /// Rod table CSV (rod_id,hu_mean,density_mg_cm3).
        #[arg(long)]
        rods: PathBuf,
        /// Input volume header (.v3h) in Hounsfield units.
        #[arg(long)]
        volume: PathBuf,
        /// Output calibrated volume header (.v3h).
        #[arg(long)]
        out_volume: PathBuf,
        /// Output calibration line as text.
        #[arg(long)]
        out_line: PathBuf,
    },
    /// Render a DRR of a volume under a pose.
    Project {
        /// Volume header (.v3h).
        #[arg(long)]
        volume: PathBuf,
        /// Optional binary mask volume header (.v3h).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Geometry config file.
        #[arg(long)]
        geometry: PathBuf,
        /// Pose as `rx,ry,rz,tx,ty,tz` (degrees and mm).
        #[arg(long, conflicts_with_all = ["pose_file", "pose_name"])]
        pose: Option<String>,
        /// Pose table CSV written by `synth`.
        #[arg(long, requires = "pose_name")]
        pose_file: Option<PathBuf>,
        /// Pose name to select from the pose table.
        #[arg(long, requires = "pose_file")]
        pose_name: Option<String>,
        /// Output image header (.i2h).
        #[arg(long)]
        out: PathBuf,
    },
    /// Register a volume to an X-ray image (gradient correlation + CMA-ES).
    Register {
        /// Run config; uses the cma_* keys, seed and geometry.
        #[arg(long)]
        config: PathBuf,
        /// X-ray image header (.i2h); dims must match the detector.
        #[arg(long)]
        xray: PathBuf,
        /// Volume header (.v3h).
        #[arg(long)]
        volume: PathBuf,
        /// Optional binary mask volume header (.v3h).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Initial pose as `rx,ry,rz,tx,ty,tz`.
        #[arg(long)]
        init: String,
        /// Output pose record.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep thresholds and pick the PCC-maximizing one.
    TuneThreshold {
        /// Run config; uses threshold_grid_size.
        #[arg(long)]
        config: PathBuf,
        /// Manifest CSV (drr,gt_bmd); paths relative to the manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Output curve CSV (threshold,pcc,valid).
        #[arg(long)]
        out_curve: PathBuf,
        /// Output chosen threshold as text.
        #[arg(long)]
        out_threshold: PathBuf,
    },
    /// Fit the mean-intensity-to-BMD line at a fixed threshold.
    FitBmd {
        /// Manifest CSV (drr,gt_bmd); paths relative to the manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Threshold value, or a file written by tune-threshold.
        #[arg(long)]
        threshold: String,
        /// Calibration target: dxa or qct.
        #[arg(long)]
        target: String,
        /// Output calibration text file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict BMD for a batch of DRRs using a saved calibration.
    Predict {
        /// Manifest CSV (case_id,pose,drr,gt_bmd); paths relative to the manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Calibration text file written by fit-bmd.
        #[arg(long)]
        calibration: PathBuf,
        /// Output BMD table CSV (case_id,pose,mean_intensity,pred_bmd,gt_bmd).
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute evaluation statistics from a BMD table.
    Evaluate {
        /// BMD table CSV written by predict.
        #[arg(long)]
        table: PathBuf,
        /// Output directory for metrics.csv and bland_altman.csv.
        #[arg(long)]
        out_dir: PathBuf,
        /// Optional manifest CSV (gt_drr,pred_drr) for image-decomposition
        /// metrics; paths relative to the manifest.
        #[arg(long)]
        drr_pairs: Option<PathBuf>,
        /// Optional run config; uses dice_thresholds (fractions of the
        /// ground-truth max) for the decomposition metrics.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Verify the loss-kernel gradients against finite differences.
    LossesCheck {
        /// Output report CSV (kernel,trials,max_rel_err,status).
        #[arg(long)]
        out: PathBuf,
    },
}

/// Error classified for the process exit code.
enum CliError {
    Data(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<bmdkit::Error> for CliError {
    fn from(e: bmdkit::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

type CliResult = Result<(), CliError>;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    let result = match cli.command {
        Command::Synth { config } => commands::synth::run(&config),
        Command::Calibrate {
            rods,
            volume,
            out_volume,
            out_line,
        } => commands::calibrate::run(&rods, &volume, &out_volume, &out_line),
        Command::Project {
            volume,
            mask,
            geometry,
            pose,
            pose_file,
            pose_name,
            out,
        } => commands::project::run(
            &volume,
            mask.as_deref(),
            &geometry,
            pose.as_deref(),
            pose_file.as_deref(),
            pose_name.as_deref(),
            &out,
        ),
        Command::Register {
            config,
            xray,
            volume,
            mask,
            init,
            out,
        } => commands::register::run(&config, &xray, &volume, mask.as_deref(), &init, &out),
        Command::TuneThreshold {
            config,
            manifest,
            out_curve,
            out_threshold,
        } => commands::bmd::tune(&config, &manifest, &out_curve, &out_threshold),
        Command::FitBmd {
            manifest,
            threshold,
            target,
            out,
        } => commands::bmd::fit(&manifest, &threshold, &target, &out),
        Command::Predict {
            manifest,
            calibration,
            out,
        } => commands::bmd::predict(&manifest, &calibration, &out),
        Command::Evaluate {
            table,
            out_dir,
            drr_pairs,
            config,
        } => commands::evaluate::run(&table, &out_dir, drr_pairs.as_deref(), config.as_deref()),
        Command::LossesCheck { out } => commands::losses_check::run(&out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
