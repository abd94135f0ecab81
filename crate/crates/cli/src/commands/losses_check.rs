//! Finite-difference verification of the differentiable loss kernels.

use std::path::Path;

use crate::commands::write_atomic;
use crate::CliResult;
use bmdkit::imaging::{Image2D, ImageUnit};
use bmdkit::losses::{gc_loss, l1_loss};

const TRIALS: usize = 25;
const SIZE: usize = 16;
const STEP: f64 = 1e-4;
const TOLERANCE: f64 = 1e-4;

/// Smooth deterministic test image built from seeded sinusoids.
fn smooth_image(seed: u64) -> Image2D {
    let s = seed as f64;
    let values = (0..SIZE * SIZE)
        .map(|i| {
            let x = (i % SIZE) as f64 / SIZE as f64;
            let y = (i / SIZE) as f64 / SIZE as f64;
            (std::f64::consts::TAU * (x + 0.13 * s)).sin()
                + 0.6 * (std::f64::consts::TAU * (1.7 * y + 0.29 * s)).cos()
                + 0.3 * (std::f64::consts::TAU * (1.3 * (x + y)) + 0.7 * s).sin()
        })
        .collect();
    Image2D::new((SIZE, SIZE), (1.0, 1.0), ImageUnit::Dimensionless, values).unwrap()
}

/// Max deviation between an analytic gradient and central finite
/// differences, relative to the finite-difference magnitude. For the L1
/// kernel, pixels within `kink_guard` of the non-differentiable point are
/// skipped.
fn max_rel_err<F: Fn(&Image2D, &Image2D) -> (f64, Image2D)>(
    f: F,
    target: &Image2D,
    output: &Image2D,
    kink_guard: Option<f64>,
) -> f64 {
    let (_, analytic) = f(target, output);
    let n = output.values().len();
    let mut fd = Vec::with_capacity(n);
    for i in 0..n {
        let mut plus = output.values().to_vec();
        let mut minus = output.values().to_vec();
        plus[i] += STEP;
        minus[i] -= STEP;
        let fp = f(target, &output.with_values(output.unit(), plus).unwrap()).0;
        let fm = f(target, &output.with_values(output.unit(), minus).unwrap()).0;
        fd.push((fp - fm) / (2.0 * STEP));
    }
    let scale = fd.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-12);
    let mut worst = 0.0f64;
    for (i, (&a, &f)) in analytic.values().iter().zip(&fd).enumerate() {
        if let Some(guard) = kink_guard {
            if (target.values()[i] - output.values()[i]).abs() < guard {
                continue;
            }
        }
        worst = worst.max((a - f).abs() / scale);
    }
    worst
}

pub fn run(out: &Path) -> CliResult {
    let mut report = String::from("kernel,trials,max_rel_err,status\n");
    let mut l1_worst = 0.0f64;
    let mut gc_worst = 0.0f64;
    for trial in 0..TRIALS {
        let target = smooth_image(2 * trial as u64);
        let output = smooth_image(2 * trial as u64 + 1);
        l1_worst = l1_worst.max(max_rel_err(
            |t, o| l1_loss(t, o).unwrap(),
            &target,
            &output,
            Some(1e-3),
        ));
        gc_worst = gc_worst.max(max_rel_err(
            |t, o| gc_loss(t, o).unwrap(),
            &target,
            &output,
            None,
        ));
    }
    let mut all_ok = true;
    for (kernel, worst) in [("l1_loss", l1_worst), ("gc_loss", gc_worst)] {
        let ok = worst <= TOLERANCE;
        all_ok &= ok;
        report.push_str(&format!(
            "{kernel},{TRIALS},{worst},{}\n",
            if ok { "pass" } else { "fail" }
        ));
    }
    write_atomic(out, &report)?;
    println!(
        "l1_loss max_rel_err {l1_worst}; gc_loss max_rel_err {gc_worst}"
    );
    if !all_ok {
        return Err(crate::CliError::Numerical(
            "loss gradient check failed".into(),
        ));
    }
    Ok(())
}
