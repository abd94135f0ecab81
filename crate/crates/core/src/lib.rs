//! Numerical core for X-ray based bone mineral density (BMD) estimation.
//!
//! The crate covers the deterministic pipeline around BMD measurement from
//! projection images: phantom calibration of CT to volumetric density,
//! masked digitally-reconstructed-radiograph (DRR) rendering, rigid 2D-3D
//! registration driven by gradient correlation and CMA-ES, threshold-tuned
//! BMD derivation, training-loss kernels with analytic gradients, the
//! evaluation statistics used to judge such systems, and a synthetic phantom
//! generator with analytically known ground truth for end-to-end testing.

// Validations use negated comparisons (`!(x > 0.0)`) so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bmd;
pub mod calibration;
pub mod error;
pub mod imaging;
pub mod losses;
pub mod metrics;
pub mod projection;
pub mod registration;
pub mod synth;

pub use error::{Error, Result};
