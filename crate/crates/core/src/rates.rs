//! Empirical convergence rates: log₂-linear fits of increment statistics
//! against the level, and of mean squared error against mean cost.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::multiindex::{subindex_expansion_from, MultiIndex};
use crate::seed::{Purpose, SeedPath};
use crate::smc::{run_coupled_smc, SmcConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> RateFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    RateFit {
        slope,
        intercept,
        r_squared,
    }
}

/// Fit `log₂(value) = intercept + slope · level`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::invalid("rate fits need at least three points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
        return Err(Error::invalid(format!("value {} at level {} is not positive", p.1, p.0)));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    Ok(least_squares(&x, &y))
}

/// A fit over all points and, if that fit has `R² < 0.9`, one with leading
/// pre-asymptotic points dropped (keeping at least three).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimmedFit {
    pub full: RateFit,
    pub trimmed: Option<RateFit>,
    pub dropped: usize,
}

impl TrimmedFit {
    pub fn best(&self) -> RateFit {
        self.trimmed.unwrap_or(self.full)
    }
}

pub fn fit_rate_trimmed(points: &[(f64, f64)]) -> Result<TrimmedFit> {
    let full = fit_rate(points)?;
    let mut dropped = 0;
    let mut trimmed = None;
    let mut fit = full;
    while fit.r_squared < 0.9 && points.len() - dropped > 3 {
        dropped += 1;
        fit = fit_rate(&points[dropped..])?;
        trimmed = Some(fit);
    }
    Ok(TrimmedFit { full, trimmed, dropped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub budget: f64,
    pub mean_cost: f64,
    pub mse: f64,
    pub realizations: usize,
}

/// Group `(budget, cost, squared_error)` records by budget, average into MSE
/// and mean cost, and fit `log MSE` against `log cost`.
pub fn fit_mse_cost(records: &[(f64, f64, f64)]) -> Result<(RateFit, Vec<MsePoint>)> {
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for &(b, c, e) in records {
        if !(e >= 0.0) {
            return Err(Error::invalid("squared errors must be non-negative"));
        }
        let g = groups.entry(b.to_bits()).or_insert((0.0, 0.0, 0));
        g.0 += c;
        g.1 += e;
        g.2 += 1;
    }
    let mut table: Vec<MsePoint> = groups
        .into_iter()
        .map(|(b, (c, e, n))| MsePoint {
            budget: f64::from_bits(b),
            mean_cost: c / n as f64,
            mse: e / n as f64,
            realizations: n,
        })
        .collect();
    table.sort_by(|a, b| a.budget.total_cmp(&b.budget));
    if table.len() < 2 {
        return Err(Error::invalid("MSE-cost fits need at least two budget levels"));
    }
    if table.iter().any(|p| !(p.mse > 0.0) || !(p.mean_cost > 0.0)) {
        return Err(Error::invalid("MSE and cost must be positive at every budget"));
    }
    let x: Vec<f64> = table.iter().map(|p| p.mean_cost.log2()).collect();
    let y: Vec<f64> = table.iter().map(|p| p.mse.log2()).collect();
    Ok((least_squares(&x, &y), table))
}

/// A sweep of indices along one direction or the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sweep {
    /// `base + t e_direction` for `t` in `steps`.
    Direction { base: MultiIndex, direction: usize, steps: Vec<u32> },
    /// `base + t (1, …, 1)` for `t` in `steps`.
    Diagonal { base: MultiIndex, steps: Vec<u32> },
}

impl Sweep {
    /// `(t, α)` pairs of the sweep.
    pub fn indices(&self) -> Vec<(u32, MultiIndex)> {
        match self {
            Sweep::Direction { base, direction, steps } => steps
                .iter()
                .map(|&t| {
                    let mut c = base.components().to_vec();
                    c[*direction] += t;
                    (t, MultiIndex::from(c))
                })
                .collect(),
            Sweep::Diagonal { base, steps } => steps
                .iter()
                .map(|&t| (t, MultiIndex::from(base.components().iter().map(|c| c + t).collect::<Vec<_>>())))
                .collect(),
        }
    }
}

/// How increment statistics are gathered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IncrementMethod {
    /// Prior Monte Carlo of `Δ(L_α ζ_α)`: `replications` batches of `samples`.
    PriorMonteCarlo { samples: usize, replications: usize },
    /// Replicated coupled SMC runs; statistics of `F^N_α(ψ_φ)`.
    Smc { particles: usize, replications: usize, smc: SmcConfig },
}

/// Statistics at one index of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementRecord {
    pub step: u32,
    pub alpha: MultiIndex,
    /// Mean of the increment (weak rate).
    pub mean: f64,
    /// Variance / second moment of the increment (strong rate).
    pub variance: f64,
    pub mean_se: f64,
    pub replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementRates {
    pub records: Vec<IncrementRecord>,
    /// Fit of `|mean|`: `s = -slope`.
    pub weak: TrimmedFit,
    /// Fit of the variance: `β = -slope`.
    pub strong: TrimmedFit,
}

impl IncrementRates {
    pub fn s(&self) -> f64 {
        -self.weak.best().slope
    }

    pub fn beta(&self) -> f64 {
        -self.strong.best().slope
    }
}

/// `Δ(L_α ζ_α)(x)` for one prior draw, with likelihoods scaled by `exp(-shift)`.
fn prior_increment(
    model: &dyn Model,
    alpha: &MultiIndex,
    offset: &MultiIndex,
    state: &[f64],
    shift: f64,
) -> Result<(f64, f64)> {
    let mut phi = 0.0;
    let mut one = 0.0;
    for s in subindex_expansion_from(alpha, offset) {
        let e = model.evaluate(&s.index, alpha, state)?;
        let l = f64::from(s.sign) * (e.log_likelihood - shift).exp();
        phi += l * e.qoi;
        one += l;
    }
    Ok((phi, one))
}

/// Increment statistics along `sweep` with boundary `offset`, and fitted
/// weak/strong slopes. For prior Monte Carlo, likelihoods are scaled by one
/// constant for the whole sweep (the largest log-likelihood at the first
/// index, from a pilot of the same draws), which leaves the slopes unchanged.
pub fn estimate_increment_rates(
    model: &dyn Model,
    sweep: &Sweep,
    offset: &MultiIndex,
    method: &IncrementMethod,
    seed: &SeedPath,
) -> Result<IncrementRates> {
    let indices = sweep.indices();
    if indices.len() < 3 {
        return Err(Error::invalid("a rate sweep needs at least three indices"));
    }
    for (_, a) in &indices {
        if a.dim() != offset.dim() || !a.dominates(offset) {
            return Err(Error::BelowOffset {
                index: a.clone(),
                offset: offset.clone(),
            });
        }
    }
    let seed = seed.clone().purpose(Purpose::Rates);
    let records = match method {
        IncrementMethod::PriorMonteCarlo { samples, replications } => {
            if *replications < 2 || *samples == 0 {
                return Err(Error::invalid("need ≥ 2 replications of ≥ 1 sample"));
            }
            let shift = {
                let a = &indices[0].1;
                let mut rng = seed.clone().alpha(a).realization(u32::MAX).rng();
                let mut m = f64::NEG_INFINITY;
                for _ in 0..(*samples).min(200) {
                    let x = model.sample_prior(a, &mut rng);
                    m = m.max(model.evaluate(a, a, &x)?.log_likelihood);
                }
                m
            };
            let jobs: Vec<(usize, usize)> =
                (0..indices.len()).flat_map(|i| (0..*replications).map(move |r| (i, r))).collect();
            let batch: Vec<Result<(f64, f64)>> = jobs
                .par_iter()
                .map(|&(i, r)| {
                    let a = &indices[i].1;
                    let mut rng = seed.clone().alpha(a).realization(r as u32).rng();
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for _ in 0..*samples {
                        let x = model.sample_prior(a, &mut rng);
                        let (d, _) = prior_increment(model, a, offset, &x, shift).map_err(|e| e.at_index(a))?;
                        s1 += d;
                        s2 += d * d;
                    }
                    Ok((s1 / *samples as f64, s2 / *samples as f64))
                })
                .collect();
            let batch: Vec<(f64, f64)> = batch.into_iter().collect::<Result<_>>()?;
            indices
                .iter()
                .enumerate()
                .map(|(i, (t, a))| {
                    let rows = &batch[i * replications..(i + 1) * replications];
                    summarize(*t, a, rows.iter().map(|r| r.0).collect(), Some(rows.iter().map(|r| r.1).collect()))
                })
                .collect::<Vec<_>>()
        }
        IncrementMethod::Smc { particles, replications, smc } => {
            if *replications < 2 {
                return Err(Error::invalid("need ≥ 2 replications"));
            }
            let jobs: Vec<(usize, usize)> =
                (0..indices.len()).flat_map(|i| (0..*replications).map(move |r| (i, r))).collect();
            let vals: Vec<Result<f64>> = jobs
                .par_iter()
                .map(|&(i, r)| {
                    let a = &indices[i].1;
                    let mut rng = seed.clone().alpha(a).realization(r as u32).rng();
                    run_coupled_smc(model, a, offset, smc, *particles, &mut rng)
                        .map(|e| e.f_phi())
                        .map_err(|e| e.at_index(a))
                })
                .collect();
            let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
            indices
                .iter()
                .enumerate()
                .map(|(i, (t, a))| summarize(*t, a, vals[i * replications..(i + 1) * replications].to_vec(), None))
                .collect()
        }
    };
    let weak_pts: Vec<(f64, f64)> = records.iter().map(|r| (r.step as f64, r.mean.abs())).collect();
    let strong_pts: Vec<(f64, f64)> = records.iter().map(|r| (r.step as f64, r.variance)).collect();
    Ok(IncrementRates {
        weak: fit_rate_trimmed(&weak_pts)?,
        strong: fit_rate_trimmed(&strong_pts)?,
        records,
    })
}

/// Per-index summary. With `second` the strong statistic is the mean second
/// moment; otherwise the sample variance of `first`.
fn summarize(step: u32, alpha: &MultiIndex, first: Vec<f64>, second: Option<Vec<f64>>) -> IncrementRecord {
    let r = first.len() as f64;
    let mean = first.iter().sum::<f64>() / r;
    let var = first.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    let variance = match second {
        Some(s) => s.iter().sum::<f64>() / r,
        None => var,
    };
    IncrementRecord {
        step,
        alpha: alpha.clone(),
        mean,
        variance,
        mean_se: (var / r).sqrt(),
        replications: first.len(),
    }
}
