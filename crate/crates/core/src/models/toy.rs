//! One-dimensional elliptic toy problem.
//!
//! `-u'' = x` on `[0,1]` with `u(0) = u(1) = 0`, so `u(z; x) = (x/2) z (1 - z)`.
//! Ten noisy observations of `u` at `z = 0.1, …, 1.0`, a `U[-1,1]` prior and
//! the quantity of interest `φ(x) = x²`.
//!
//! At level `α` the solution is the piecewise-linear FEM approximation with
//! `2^α` intervals, evaluated at the observation points by interpolation.
//! Since the forcing is linear in `x`, `u_α(x) = x · u_α(1)`; the per-level
//! observation gains `u_α(1)(z_i)` are computed once and cached.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::fem::fem_solve_1d;
use super::{gaussian_log_likelihood, Evaluation, Model, Prior};
use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

const MAX_CACHED_LEVEL: usize = 40;

pub fn default_design() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug)]
pub struct ToyModel {
    design: Vec<f64>,
    data: Vec<f64>,
    noise_sd: f64,
    gains: Vec<OnceLock<Vec<f64>>>,
    gamma: [f64; 1],
}

impl ToyModel {
    pub fn new(design: Vec<f64>, data: Vec<f64>, noise_sd: f64) -> Result<Self> {
        if design.len() != data.len() {
            return Err(Error::Data(format!(
                "{} observation points but {} data values",
                design.len(),
                data.len()
            )));
        }
        if design.iter().any(|z| !(0.0..=1.0).contains(z)) {
            return Err(Error::Data("observation points must lie in [0, 1]".into()));
        }
        if !(noise_sd > 0.0) {
            return Err(Error::Data("noise standard deviation must be positive".into()));
        }
        Ok(ToyModel {
            design,
            data,
            noise_sd,
            gains: (0..=MAX_CACHED_LEVEL).map(|_| OnceLock::new()).collect(),
            gamma: [1.0],
        })
    }

    /// Model with data `y_i = u(z_i; x*) + ν_i`, `ν_i ~ N(0, σ²)`.
    pub fn synthetic<R: Rng + ?Sized>(x_true: f64, noise_sd: f64, rng: &mut R) -> Result<Self> {
        let design = default_design();
        let data = synthesize_toy_data(&design, x_true, noise_sd, rng);
        Self::new(design, data, noise_sd)
    }

    /// Likelihood that ignores the data: `L ≡ 1`.
    pub fn flat() -> Self {
        Self::new(Vec::new(), Vec::new(), 1.0).expect("empty data is valid")
    }

    pub fn design(&self) -> &[f64] {
        &self.design
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    fn compute_gains(&self, level: u32) -> Vec<f64> {
        let sol = fem_solve_1d(level, |_| 1.0, |_| 1.0).expect("unit coefficient is elliptic");
        self.design.iter().map(|&z| sol.eval(z)).collect()
    }

    /// `u_α(1)` at the observation points.
    pub fn gains(&self, level: u32) -> Vec<f64> {
        self.with_gains(level, |g| g.to_vec())
    }

    fn with_gains<T>(&self, level: u32, f: impl FnOnce(&[f64]) -> T) -> T {
        match self.gains.get(level as usize) {
            Some(cell) => f(cell.get_or_init(|| self.compute_gains(level))),
            None => f(&self.compute_gains(level)),
        }
    }

    /// `log L_α(x)` from the FEM solution at level `α`.
    pub fn log_likelihood_at(&self, level: u32, x: f64) -> f64 {
        self.with_gains(level, |g| {
            let pred: Vec<f64> = g.iter().map(|gi| x * gi).collect();
            gaussian_log_likelihood(&self.data, &pred, self.noise_sd)
        })
    }

    /// `log L(x)` from the analytic solution.
    pub fn exact_log_likelihood(&self, x: f64) -> f64 {
        let pred: Vec<f64> = self.design.iter().map(|&z| exact_solution(z, x)).collect();
        gaussian_log_likelihood(&self.data, &pred, self.noise_sd)
    }
}

/// `u(z; x) = -(x/2)(z² - z)`.
pub fn exact_solution(z: f64, x: f64) -> f64 {
    -0.5 * x * (z * z - z)
}

pub fn synthesize_toy_data<R: Rng + ?Sized>(
    design: &[f64],
    x_true: f64,
    noise_sd: f64,
    rng: &mut R,
) -> Vec<f64> {
    let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("finite noise");
    design
        .iter()
        .map(|&z| {
            let clean = exact_solution(z, x_true);
            if noise_sd > 0.0 {
                clean + noise.sample(rng)
            } else {
                clean
            }
        })
        .collect()
}

impl Model for ToyModel {
    fn name(&self) -> &str {
        "toy"
    }

    fn dim(&self) -> usize {
        1
    }

    fn start_level(&self) -> MultiIndex {
        MultiIndex::zeros(1)
    }

    fn cost_rates(&self) -> &[f64] {
        &self.gamma
    }

    fn max_level(&self) -> Option<u32> {
        Some(24)
    }

    fn prior(&self) -> Prior {
        Prior::UniformBox { lo: -1.0, hi: 1.0 }
    }

    fn state_len(&self, _finest: &MultiIndex) -> usize {
        1
    }

    fn evaluate(&self, level: &MultiIndex, _finest: &MultiIndex, state: &[f64]) -> Result<Evaluation> {
        let x = state[0];
        Ok(Evaluation {
            log_likelihood: self.log_likelihood_at(level.get(0), x),
            qoi: x * x,
        })
    }
}
