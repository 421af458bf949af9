//! Ratio estimators of `π(φ)` built from coupled SMC increments.
//!
//! All four estimators have the form
//!
//! ```text
//! φ̂ = Σ_α w_α F^{N_α}_α(ψ_φ) / max{ Σ_α w_α F^{N_α}_α(ψ_1), z_min }
//! ```
//!
//! * single level: one index, no differences, `w = 1`;
//! * MISMC (MLSMC for `D = 1`): a downward-closed index set, `w_α = 1`;
//! * rMISMC: `N_α` drawn from a multinomial over `p_α`, `w_α = N_α / (N p_α)`.
//!
//! Every index runs its own SMC on the stream
//! `seed.purpose(Smc).alpha(α)`, so the result does not depend on how the
//! runs are scheduled; partial sums are reduced in index order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::multiindex::{sample_allocation, AllocationDistribution, IndexSet, MultiIndex};
use crate::seed::{Purpose, SeedPath};
use crate::smc::{run_coupled_smc, IncrementEstimate, SmcConfig};

pub const DEFAULT_N_FLOOR: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub value: f64,
    pub numerator: f64,
    pub denominator_raw: f64,
    pub clamped: bool,
    pub total_cost: f64,
    /// Particle count per populated index.
    pub populated: BTreeMap<MultiIndex, usize>,
}

/// What to run for one estimate.
#[derive(Clone, Debug, PartialEq)]
pub enum EstimatorKind {
    SingleLevel { level: MultiIndex, particles: usize },
    Mismc { set: IndexSet, particles: BTreeMap<MultiIndex, usize> },
    Randomized { distribution: AllocationDistribution, n: usize, n_min: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub z_min: f64,
    pub smc: SmcConfig,
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_min > 0.0) {
            return Err(Error::config("z_min", "must be positive"));
        }
        self.smc.validate()
    }
}

/// `num / max(den, z_min)` with the clamp flag.
pub fn clamped_ratio(num: f64, den: f64, z_min: f64) -> (f64, bool) {
    if den < z_min {
        (num / z_min, true)
    } else {
        (num / den, false)
    }
}

struct Term {
    alpha: MultiIndex,
    particles: usize,
    weight: f64,
}

fn run_terms(
    model: &dyn Model,
    offset: &MultiIndex,
    terms: &[Term],
    smc: &SmcConfig,
    z_min: f64,
    seed: &SeedPath,
) -> Result<EstimateResult> {
    let runs: Vec<Result<IncrementEstimate>> = terms
        .par_iter()
        .map(|t| {
            let mut rng = seed.clone().purpose(Purpose::Smc).alpha(&t.alpha).rng();
            run_coupled_smc(model, &t.alpha, offset, smc, t.particles, &mut rng)
                .map_err(|e| e.at_index(&t.alpha))
        })
        .collect();
    let (mut num, mut den, mut cost) = (0.0, 0.0, 0.0);
    let mut populated = BTreeMap::new();
    for (t, r) in terms.iter().zip(runs) {
        let inc = r?;
        num += t.weight * inc.f_phi();
        den += t.weight * inc.f_one();
        cost += inc.cost;
        populated.insert(t.alpha.clone(), t.particles);
    }
    let (value, clamped) = clamped_ratio(num, den, z_min);
    Ok(EstimateResult {
        value,
        numerator: num,
        denominator_raw: den,
        clamped,
        total_cost: cost,
        populated,
    })
}

/// Single-level SMC ratio estimate at `level`.
pub fn single_level_estimate(
    model: &dyn Model,
    level: &MultiIndex,
    particles: usize,
    smc: &SmcConfig,
    z_min: f64,
    seed: &SeedPath,
) -> Result<EstimateResult> {
    let terms = [Term {
        alpha: level.clone(),
        particles,
        weight: 1.0,
    }];
    run_terms(model, level, &terms, smc, z_min, seed)
}

/// Deterministic MISMC over `set` with `particles[α]` for every member.
pub fn mismc_estimate(
    model: &dyn Model,
    set: &IndexSet,
    particles: &BTreeMap<MultiIndex, usize>,
    smc: &SmcConfig,
    z_min: f64,
    seed: &SeedPath,
) -> Result<EstimateResult> {
    let mut terms = Vec::with_capacity(set.len());
    for a in set.members() {
        let n = *particles
            .get(a)
            .ok_or_else(|| Error::invalid(format!("no particle count for {a}")))?;
        if n < 2 {
            return Err(Error::invalid(format!("need at least two particles at {a}")));
        }
        terms.push(Term {
            alpha: a.clone(),
            particles: n,
            weight: 1.0,
        });
    }
    run_terms(model, set.offset(), &terms, smc, z_min, seed)
}

/// Randomized MISMC with `N` total samples drawn in blocks of `N_min`.
pub fn rmismc_estimate(
    model: &dyn Model,
    dist: &AllocationDistribution,
    n: usize,
    n_min: usize,
    smc: &SmcConfig,
    z_min: f64,
    seed: &SeedPath,
) -> Result<EstimateResult> {
    if n_min < 2 {
        return Err(Error::invalid("N_min must be at least 2"));
    }
    let mut rng = seed.clone().purpose(Purpose::Allocation).rng();
    let counts = sample_allocation(dist, n, n_min, &mut rng)?;
    let mut terms = Vec::with_capacity(counts.len());
    for (a, &na) in &counts {
        let p = dist.probability(a)?;
        terms.push(Term {
            alpha: a.clone(),
            particles: na,
            weight: na as f64 / (n as f64 * p),
        });
    }
    run_terms(model, dist.offset(), &terms, smc, z_min, seed)
}

pub fn estimate(model: &dyn Model, cfg: &EstimatorConfig, seed: &SeedPath) -> Result<EstimateResult> {
    cfg.validate()?;
    match &cfg.kind {
        EstimatorKind::SingleLevel { level, particles } => {
            single_level_estimate(model, level, *particles, &cfg.smc, cfg.z_min, seed)
        }
        EstimatorKind::Mismc { set, particles } => mismc_estimate(model, set, particles, &cfg.smc, cfg.z_min, seed),
        EstimatorKind::Randomized { distribution, n, n_min } => {
            rmismc_estimate(model, distribution, *n, *n_min, &cfg.smc, cfg.z_min, seed)
        }
    }
}

/// MIMC-style allocation `N_α ∝ Π_i 2^{-(α_i - o_i)(β_i + γ_i)/2}` scaled so
/// that `Σ_α N_α c(α) ≈ budget`, where `c(α)` is the cost of one particle at
/// `α`. Counts are rounded up and floored at `n_floor`.
pub fn allocate_samples_deterministic(
    set: &IndexSet,
    beta: &[f64],
    gamma: &[f64],
    budget: f64,
    n_floor: usize,
    particle_cost: impl Fn(&MultiIndex) -> f64,
) -> Result<BTreeMap<MultiIndex, usize>> {
    let offset = set.offset();
    if beta.len() != offset.dim() || gamma.len() != offset.dim() {
        return Err(Error::invalid("rates must have one entry per direction"));
    }
    let weight = |a: &MultiIndex| -> f64 {
        a.components()
            .iter()
            .zip(offset.components())
            .zip(beta.iter().zip(gamma))
            .map(|((&ai, &oi), (&b, &g))| (-((ai - oi) as f64) * 0.5 * (b + g)).exp2())
            .product()
    };
    let costs: Vec<f64> = set.members().iter().map(&particle_cost).collect();
    let minimum: f64 = costs.iter().map(|c| n_floor as f64 * c).sum();
    if budget < minimum {
        return Err(Error::InfeasibleBudget { budget, minimum });
    }
    let norm: f64 = set.members().iter().zip(&costs).map(|(a, c)| weight(a) * c).sum();
    let lambda = budget / norm;
    Ok(set
        .members()
        .iter()
        .map(|a| {
            let raw = lambda * weight(a);
            let n = (raw - 1e-9 * raw).ceil() as usize;
            (a.clone(), n.max(n_floor))
        })
        .collect())
}
