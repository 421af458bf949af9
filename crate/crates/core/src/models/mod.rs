//! Forward models: a prior, a resolution-dependent likelihood, a quantity of
//! interest and a cost model, all addressed by [`MultiIndex`].
//!
//! Three families are provided:
//!
//! * [`toy::ToyModel`]: 1D elliptic problem with an analytic solution,
//! * [`elliptic::EllipticModel`]: 2D elliptic PDE solved with bilinear FEM,
//! * [`point_process::PointProcessModel`]: log-Gaussian Cox / log-Gaussian
//!   process density models with a truncated spectral Gaussian prior.

pub mod elliptic;
pub mod fem;
pub mod point_process;
pub mod quadrature;
pub mod spectral;
pub mod toy;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::multiindex::MultiIndex;

/// Prior families. Mutation kernels are chosen to be reversible for these.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prior {
    /// i.i.d. uniform on `[lo, hi]` per coordinate.
    UniformBox { lo: f64, hi: f64 },
    /// i.i.d. standard normal per coordinate.
    StandardGaussian,
}

impl Prior {
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            Prior::UniformBox { lo, hi } => {
                (0..len).map(|_| rng.random_range(lo..hi)).collect()
            }
            Prior::StandardGaussian => (0..len).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }
}

/// Log-likelihood and quantity of interest at one resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub log_likelihood: f64,
    pub qoi: f64,
}

/// A forward model family evaluated at resolution `α`.
///
/// The latent state of an SMC run at `α` is laid out by
/// [`Model::state_len`] for that `α`; coarser sub-indices read what they need
/// from the same vector, which is how the Dirac coupling of the prior is
/// realized.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    /// Number of discretization directions `D`.
    fn dim(&self) -> usize;

    /// Coarsest admissible physical index.
    fn start_level(&self) -> MultiIndex;

    /// Cost exponents `γ_i`.
    fn cost_rates(&self) -> &[f64];

    fn prior(&self) -> Prior;

    /// Length of the latent vector for an SMC run whose finest index is `finest`.
    fn state_len(&self, finest: &MultiIndex) -> usize;

    /// Evaluate at `level <= finest` using a state laid out for `finest`.
    fn evaluate(&self, level: &MultiIndex, finest: &MultiIndex, state: &[f64]) -> Result<Evaluation>;

    /// Largest component of `α` the model will evaluate. Randomized
    /// allocations have unbounded support, so this is what stops a rare deep
    /// draw from exhausting memory.
    fn max_level(&self) -> Option<u32> {
        None
    }

    /// Abstract cost `Π_i 2^{α_i γ_i}` of one evaluation at `α`.
    fn cost(&self, alpha: &MultiIndex) -> f64 {
        alpha
            .components()
            .iter()
            .zip(self.cost_rates())
            .map(|(&a, &g)| (a as f64 * g).exp2())
            .product()
    }

    fn sample_prior(&self, finest: &MultiIndex, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        self.prior().sample(self.state_len(finest), rng)
    }
}

/// Gaussian log-likelihood `-½ Σ (y_i - g_i)² / σ²`.
pub(crate) fn gaussian_log_likelihood(data: &[f64], predicted: &[f64], noise_sd: f64) -> f64 {
    let inv = 1.0 / (noise_sd * noise_sd);
    -0.5 * data
        .iter()
        .zip(predicted)
        .map(|(y, g)| (y - g) * (y - g))
        .sum::<f64>()
        * inv
}
