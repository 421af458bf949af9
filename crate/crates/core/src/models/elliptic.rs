//! Two-dimensional elliptic PDE with a two-parameter diffusion coefficient.
//!
//! `-∇·(a(x)∇u) = 100` on `[0,1]²`, zero Dirichlet boundary, with
//!
//! ```text
//! a(x)(z) = 3 + x_1 cos(3 z_1) sin(3 z_2) + x_2 cos(z_1) sin(z_2),   x ~ U[-1,1]²
//! ```
//!
//! observed pointwise at four interior points with Gaussian noise. The
//! quantity of interest is `φ(x) = x_1² + x_2²`. Level `α = (α_1, α_2)`
//! discretizes with `2^{α_1} × 2^{α_2}` bilinear elements.
//!
//! The stiffness matrix is affine in `x`, so the three component matrices are
//! assembled once per level and cached; each evaluation only combines them and
//! runs a banded Cholesky solve.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::fem::{assemble_2d_any_sign, intervals, BandCholesky, Solution2d, Stencil2d};
use super::{gaussian_log_likelihood, Evaluation, Model, Prior};
use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

pub const OBSERVATION_POINTS: [(f64, f64); 4] = [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)];
pub const FORCING: f64 = 100.0;
/// Largest banded Cholesky factor a single solve may allocate.
pub const MAX_BAND_VALUES: usize = 1 << 26;

/// Diffusion coefficient at `z` for parameters `x`.
pub fn coefficient(x: &[f64], z1: f64, z2: f64) -> f64 {
    3.0 + x[0] * (3.0 * z1).cos() * (3.0 * z2).sin() + x[1] * z1.cos() * z2.sin()
}

#[derive(Debug)]
struct AffineSystem {
    k1: usize,
    k2: usize,
    base: Stencil2d,
    terms: [Stencil2d; 2],
    load: Vec<f64>,
}

impl AffineSystem {
    fn assemble(alpha: (u32, u32)) -> Result<Self> {
        let (k1, k2) = (intervals(alpha.0), intervals(alpha.1));
        // Band factor storage is about k1·k2·min(k1, k2) values.
        let band = (k1 as u128) * (k2 as u128) * (k1.min(k2) as u128 + 2);
        if band > MAX_BAND_VALUES as u128 {
            return Err(Error::ResourceLimit(format!(
                "FEM system at level ({}, {}) needs {band} band values (limit {MAX_BAND_VALUES})",
                alpha.0, alpha.1
            )));
        }
        let (s0, _) = assemble_2d_any_sign(k1, k2, |_, _| 3.0, |_, _| FORCING)?;
        let (s1, _) = assemble_2d_any_sign(k1, k2, |z1, z2| (3.0 * z1).cos() * (3.0 * z2).sin(), |_, _| 0.0)?;
        let (s2, _) = assemble_2d_any_sign(k1, k2, |z1, z2| z1.cos() * z2.sin(), |_, _| 0.0)?;
        Ok(AffineSystem {
            k1,
            k2,
            base: s0.stiffness,
            terms: [s1.stiffness, s2.stiffness],
            load: s0.load,
        })
    }

    fn solve(&self, x: &[f64]) -> Result<Solution2d> {
        // Worst case of the oscillating terms is ±1 each.
        let floor = 3.0 - x[0].abs() - x[1].abs();
        if floor <= 0.0 {
            return Err(Error::NotElliptic { min: floor });
        }
        if self.base.unknowns() == 0 {
            return Ok(Solution2d::from_interior(self.k1, self.k2, &[]));
        }
        let mut st = self.base.clone();
        st.axpy(x[0], &self.terms[0]);
        st.axpy(x[1], &self.terms[1]);
        let chol = BandCholesky::factor(&st)?;
        let u = chol.solve(&self.load);
        Ok(Solution2d::from_interior(self.k1, self.k2, &u))
    }
}

#[derive(Debug)]
pub struct EllipticModel {
    data: Vec<f64>,
    noise_sd: f64,
    cache: RwLock<HashMap<(u32, u32), Arc<AffineSystem>>>,
    gamma: [f64; 2],
}

impl EllipticModel {
    pub fn new(data: Vec<f64>, noise_sd: f64) -> Result<Self> {
        if data.len() != OBSERVATION_POINTS.len() {
            return Err(Error::Data(format!(
                "expected {} observations, got {}",
                OBSERVATION_POINTS.len(),
                data.len()
            )));
        }
        if !(noise_sd > 0.0) {
            return Err(Error::Data("noise standard deviation must be positive".into()));
        }
        Ok(EllipticModel {
            data,
            noise_sd,
            cache: RwLock::new(HashMap::new()),
            gamma: [1.0, 1.0],
        })
    }

    /// Data generated by solving at `data_level` with parameters `x_true`.
    pub fn synthetic<R: Rng + ?Sized>(
        x_true: [f64; 2],
        data_level: (u32, u32),
        noise_sd: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let probe = EllipticModel::new(vec![0.0; 4], noise_sd.max(f64::MIN_POSITIVE))?;
        let clean = probe.observe(data_level, &x_true)?;
        let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("finite noise");
        let data = clean
            .into_iter()
            .map(|c| if noise_sd > 0.0 { c + noise.sample(rng) } else { c })
            .collect();
        EllipticModel::new(data, noise_sd)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    fn system(&self, alpha: (u32, u32)) -> Result<Arc<AffineSystem>> {
        if let Some(s) = self.cache.read().expect("cache lock").get(&alpha) {
            return Ok(s.clone());
        }
        let sys = Arc::new(AffineSystem::assemble(alpha)?);
        let mut w = self.cache.write().expect("cache lock");
        Ok(w.entry(alpha).or_insert(sys).clone())
    }

    /// FEM solution at level `α` for parameters `x`.
    pub fn solve(&self, alpha: (u32, u32), x: &[f64]) -> Result<Solution2d> {
        self.system(alpha)?.solve(x)
    }

    /// Observation functional `G_α(x)`.
    pub fn observe(&self, alpha: (u32, u32), x: &[f64]) -> Result<Vec<f64>> {
        let sol = self.solve(alpha, x)?;
        Ok(OBSERVATION_POINTS.iter().map(|&(z1, z2)| sol.eval(z1, z2)).collect())
    }

    pub fn log_likelihood_at(&self, alpha: (u32, u32), x: &[f64]) -> Result<f64> {
        let pred = self.observe(alpha, x)?;
        Ok(gaussian_log_likelihood(&self.data, &pred, self.noise_sd))
    }
}

fn pair(alpha: &MultiIndex) -> (u32, u32) {
    (alpha.get(0), alpha.get(1))
}

impl Model for EllipticModel {
    fn name(&self) -> &str {
        "pde2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn start_level(&self) -> MultiIndex {
        MultiIndex::from([2, 2])
    }

    fn cost_rates(&self) -> &[f64] {
        &self.gamma
    }

    fn max_level(&self) -> Option<u32> {
        // Anisotropic grids stay cheap; isotropic blow-up is caught by
        // MAX_BAND_VALUES at assembly.
        Some(16)
    }

    fn prior(&self) -> Prior {
        Prior::UniformBox { lo: -1.0, hi: 1.0 }
    }

    fn state_len(&self, _finest: &MultiIndex) -> usize {
        2
    }

    fn evaluate(&self, level: &MultiIndex, _finest: &MultiIndex, state: &[f64]) -> Result<Evaluation> {
        let ll = self
            .log_likelihood_at(pair(level), state)
            .map_err(|e| e.at_index(level))?;
        Ok(Evaluation {
            log_likelihood: ll,
            qoi: state[0] * state[0] + state[1] * state[1],
        })
    }
}
