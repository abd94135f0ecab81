//! (mu/mu_w, lambda)-CMA-ES with weighted recombination, cumulative step-size
//! adaptation and rank-one plus rank-mu covariance updates.
//!
//! The search runs in a normalized space where each coordinate is divided by
//! its configured scale, so `scales` acts as the per-parameter initial
//! standard deviation and the global step size starts at 1. All randomness
//! comes from a seeded ChaCha stream; candidates are evaluated and ranked in
//! a fixed order, so runs are bit-reproducible.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Configuration for a CMA-ES run.
#[derive(Debug, Clone)]
pub struct CmaConfig {
    /// Population size lambda; defaults to `4 + floor(3 ln n)`.
    pub population: Option<usize>,
    /// Per-parameter initial standard deviations; length fixes the dimension.
    pub scales: Vec<f64>,
    /// Evaluation budget (checked after each full generation).
    pub max_evaluations: usize,
    /// Stop when the normalized step size falls below this.
    pub tol_sigma: f64,
    /// Stop when a generation's objective spread falls below this.
    pub tol_fun: f64,
    pub seed: u64,
}

impl CmaConfig {
    /// Defaults for 6-DOF pose search: 2 degrees / 2 mm initial spread.
    pub fn registration_default(seed: u64) -> Self {
        Self {
            population: None,
            scales: vec![2.0; 6],
            max_evaluations: 3000,
            tol_sigma: 1e-5,
            tol_fun: 1e-12,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.scales.len();
        if n == 0 {
            return Err(Error::InvalidConfig("dimension must be >= 1".into()));
        }
        if self.scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "per-parameter scales must be positive and finite".into(),
            ));
        }
        if let Some(lambda) = self.population {
            if lambda < 2 {
                return Err(Error::InvalidConfig(format!(
                    "population must be >= 2, got {lambda}"
                )));
            }
        }
        if self.max_evaluations == 0 {
            return Err(Error::InvalidConfig("max_evaluations must be >= 1".into()));
        }
        if !(self.tol_sigma >= 0.0) || !(self.tol_fun >= 0.0) {
            return Err(Error::InvalidConfig(
                "tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn lambda(&self, n: usize) -> usize {
        self.population
            .unwrap_or(4 + (3.0 * (n as f64).ln()).floor() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEvaluations,
    TolSigma,
    TolFun,
}

#[derive(Debug, Clone)]
pub struct CmaResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub evaluations: usize,
    pub generations: usize,
    pub stop: StopReason,
    /// Best-so-far objective after each generation.
    pub trace: Vec<f64>,
}

/// Stepwise CMA-ES state; use [`cma_es_minimize`] unless you need to inspect
/// the state between generations.
pub struct CmaEs {
    dim: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    scales: Vec<f64>,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    rng: ChaCha8Rng,
    generation: usize,
    evaluations: usize,
    max_evaluations: usize,
    tol_sigma: f64,
    tol_fun: f64,
    x0: Vec<f64>,
    best_x: Vec<f64>,
    best_f: f64,
    min_eigenvalue: f64,
    trace: Vec<f64>,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; consumes exactly two uniforms per draw.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl CmaEs {
    pub fn new(x0: &[f64], config: &CmaConfig) -> Result<Self> {
        config.validate()?;
        let n = config.scales.len();
        if x0.len() != n {
            return Err(Error::InvalidConfig(format!(
                "x0 has {} entries but scales define dimension {n}",
                x0.len()
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("x0 must be finite".into()));
        }
        let lambda = config.lambda(n);
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let nf = n as f64;
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma =
            1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu =
            (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff)).min(1.0 - c_1);
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        let mean = DVector::from_iterator(n, x0.iter().zip(&config.scales).map(|(x, s)| x / s));
        Ok(Self {
            dim: n,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            scales: config.scales.clone(),
            mean,
            sigma: 1.0,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            generation: 0,
            evaluations: 0,
            max_evaluations: config.max_evaluations,
            tol_sigma: config.tol_sigma,
            tol_fun: config.tol_fun,
            x0: x0.to_vec(),
            best_x: x0.to_vec(),
            best_f: f64::INFINITY,
            min_eigenvalue: 1.0,
            trace: Vec::new(),
        })
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn best(&self) -> (&[f64], f64) {
        (&self.best_x, self.best_f)
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// Smallest eigenvalue of the covariance matrix at the last sampling.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn decode(&self, u: &DVector<f64>) -> Vec<f64> {
        u.iter().zip(&self.scales).map(|(v, s)| v * s).collect()
    }

    /// Runs one generation. Returns `Some(reason)` once a stop criterion
    /// fires. Non-finite objective values are treated as +infinity.
    pub fn step<F: FnMut(&[f64]) -> f64>(&mut self, mut objective: F) -> Option<StopReason> {
        let clamp = |v: f64| if v.is_finite() { v } else { f64::INFINITY };

        if self.evaluations == 0 {
            // The start point is always the first evaluation, so the best
            // result can never be worse than the initial guess.
            let f0 = clamp(objective(&self.x0));
            self.evaluations = 1;
            self.best_f = f0;
            if self.evaluations >= self.max_evaluations {
                self.trace.push(self.best_f);
                return Some(StopReason::MaxEvaluations);
            }
        }

        // C = B diag(eig) B^T
        let eigen = nalgebra::SymmetricEigen::new(self.cov.clone());
        self.min_eigenvalue = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let sqrt_eig = eigen.eigenvalues.map(|v| v.max(1e-30).sqrt());
        let bd = {
            let mut m = eigen.eigenvectors.clone();
            for (j, s) in sqrt_eig.iter().enumerate() {
                m.column_mut(j).scale_mut(*s);
            }
            m
        };

        // Sample and evaluate the generation in candidate order.
        let mut ys: Vec<DVector<f64>> = Vec::with_capacity(self.lambda);
        let mut fs: Vec<f64> = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let z = DVector::from_iterator(
                self.dim,
                (0..self.dim).map(|_| standard_normal(&mut self.rng)),
            );
            let y = &bd * z;
            let u = &self.mean + self.sigma * &y;
            let f = clamp(objective(&self.decode(&u)));
            self.evaluations += 1;
            if f < self.best_f {
                self.best_f = f;
                self.best_x = self.decode(&u);
            }
            ys.push(y);
            fs.push(f);
        }

        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap().then(a.cmp(&b)));

        // Weighted recombination of the mu best steps.
        let mut y_w = DVector::zeros(self.dim);
        for (w, &idx) in self.weights.iter().zip(&order) {
            y_w += *w * &ys[idx];
        }
        self.mean += self.sigma * &y_w;

        // Step-size path uses C^{-1/2} y_w.
        let inv_sqrt = {
            let inv = eigen.eigenvalues.map(|v| 1.0 / v.max(1e-30).sqrt());
            let mut m = eigen.eigenvectors.clone();
            for (j, s) in inv.iter().enumerate() {
                m.column_mut(j).scale_mut(*s);
            }
            m * eigen.eigenvectors.transpose()
        };
        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma
            + (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt() * (&inv_sqrt * &y_w);

        let ps_norm = self.p_sigma.norm();
        let expected = (1.0 - (1.0 - self.c_sigma).powi(2 * (self.generation as i32 + 1))).sqrt();
        let h_sigma = if ps_norm / expected < (1.4 + 2.0 / (self.dim as f64 + 1.0)) * self.chi_n {
            1.0
        } else {
            0.0
        };

        self.p_c = (1.0 - self.c_c) * &self.p_c
            + h_sigma * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt() * &y_w;

        // Rank-one + rank-mu covariance update.
        let delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c);
        let mut new_cov = (1.0 - self.c_1 - self.c_mu + self.c_1 * delta_h) * &self.cov;
        new_cov += self.c_1 * &self.p_c * self.p_c.transpose();
        for (w, &idx) in self.weights.iter().zip(&order) {
            new_cov += self.c_mu * *w * &ys[idx] * ys[idx].transpose();
        }
        self.cov = (&new_cov + new_cov.transpose()) * 0.5;

        self.sigma *= ((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();

        self.generation += 1;
        self.trace.push(self.best_f);

        if self.evaluations >= self.max_evaluations {
            return Some(StopReason::MaxEvaluations);
        }
        if self.sigma < self.tol_sigma {
            return Some(StopReason::TolSigma);
        }
        let gen_best = fs[order[0]];
        let gen_worst = fs[order[self.lambda - 1]];
        if gen_best.is_finite() && gen_worst.is_finite() && gen_worst - gen_best < self.tol_fun {
            return Some(StopReason::TolFun);
        }
        None
    }

    fn into_result(self, stop: StopReason) -> CmaResult {
        CmaResult {
            x_best: self.best_x,
            f_best: self.best_f,
            evaluations: self.evaluations,
            generations: self.generation,
            stop,
            trace: self.trace,
        }
    }
}

/// Minimizes `objective` starting from `x0`; deterministic given the seed.
pub fn cma_es_minimize<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    x0: &[f64],
    config: &CmaConfig,
) -> Result<CmaResult> {
    let mut state = CmaEs::new(x0, config)?;
    loop {
        if let Some(reason) = state.step(&mut objective) {
            return Ok(state.into_result(reason));
        }
    }
}
