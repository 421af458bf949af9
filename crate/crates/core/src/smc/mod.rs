//! Tempered SMC sampler on the coupled target of a mixed difference.
//!
//! For an index `α` with sub-indices `α_k` and signs `ι_k`, all sub-indices
//! share one latent state `x`. The coupled likelihood is
//! `L(x) = max_k L_{α_k}(x)`; the sampler tempers `L^τ π_0` from `τ = 0` to
//! `τ = 1` with resampling and `π_0`-reversible Metropolis moves, and returns
//! the normalizing-constant estimate `Z` together with the particle average of
//!
//! ```text
//! ψ_ζ(x) = Σ_k ι_k ω_k(x) ζ_{α_k}(x),   ω_k = L_{α_k}(x) / L(x).
//! ```
//!
//! `Z · mean(ψ_ζ)` is an unbiased estimate of `Δ f_α(ζ_α)`.

mod kernel;
mod resample;

pub use kernel::{propose, Proposal};
pub use resample::{effective_sample_size, normalize_log_weights, resample, Resampling};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Evaluation, Model};
use crate::multiindex::{subindex_expansion_from, MultiIndex, SignedSubIndex};

/// Tempering schedule `0 = τ_1 < … < τ_J = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    /// `τ_j = j / stages`.
    Linear { stages: usize },
    /// `τ_j = (j / stages)^exponent`.
    Power { stages: usize, exponent: f64 },
    /// Choose each `τ` by bisection so the ESS of the incremental weights is
    /// `target_ess · N`.
    Adaptive { target_ess: f64, max_stages: usize },
    Explicit { taus: Vec<f64> },
}

impl Schedule {
    /// Fixed temperatures after `τ = 0`, or `None` for an adaptive schedule.
    pub fn fixed_temperatures(&self) -> Result<Option<Vec<f64>>> {
        match self {
            Schedule::Linear { stages } => Schedule::Power {
                stages: *stages,
                exponent: 1.0,
            }
            .fixed_temperatures(),
            Schedule::Power { stages, exponent } => {
                if *stages == 0 || !(*exponent > 0.0) {
                    return Err(Error::invalid("power schedule needs stages ≥ 1 and exponent > 0"));
                }
                Ok(Some(
                    (1..=*stages)
                        .map(|j| (j as f64 / *stages as f64).powf(*exponent))
                        .collect(),
                ))
            }
            Schedule::Explicit { taus } => {
                let mut prev = 0.0;
                for &t in taus {
                    if !(t > prev) || t > 1.0 {
                        return Err(Error::invalid("explicit temperatures must increase strictly in (0, 1]"));
                    }
                    prev = t;
                }
                if prev != 1.0 {
                    return Err(Error::invalid("explicit temperatures must end at 1"));
                }
                Ok(Some(taus.clone()))
            }
            Schedule::Adaptive { target_ess, max_stages } => {
                if !(*target_ess > 0.0 && *target_ess < 1.0) || *max_stages == 0 {
                    return Err(Error::invalid("adaptive schedule needs target_ess in (0,1) and max_stages ≥ 1"));
                }
                Ok(None)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcConfig {
    pub schedule: Schedule,
    /// Metropolis steps per stage.
    pub mcmc_steps: usize,
    /// Random-walk standard deviation (uniform priors) or pCN `ρ` (Gaussian priors).
    pub step_size: f64,
    /// Scale random-walk steps by the particle standard deviation per coordinate.
    pub adaptive_step: bool,
    pub resampling: Resampling,
    /// Resample only when `ESS < ess_threshold · N`; every stage when absent.
    pub ess_threshold: Option<f64>,
}

impl Default for SmcConfig {
    fn default() -> Self {
        SmcConfig {
            schedule: Schedule::Linear { stages: 4 },
            mcmc_steps: 2,
            step_size: 0.4,
            adaptive_step: false,
            resampling: Resampling::Systematic,
            ess_threshold: None,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.fixed_temperatures()?;
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if let Some(t) = self.ess_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::invalid("ess_threshold must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmcDiagnostics {
    pub temperatures: Vec<f64>,
    /// ESS of the incremental weights at each stage, as a fraction of `N`.
    pub ess: Vec<f64>,
    pub acceptance: Vec<f64>,
    pub resampled: Vec<bool>,
    /// Coupled-state evaluations (each evaluates every sub-index).
    pub evaluations: usize,
}

/// Output of one coupled SMC run at `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementEstimate {
    pub alpha: MultiIndex,
    pub particles: usize,
    pub log_z: f64,
    /// Particle average of `ψ_φ`.
    pub psi_phi: f64,
    /// Particle average of `ψ_1`.
    pub psi_one: f64,
    /// Abstract cost: every evaluation charges `Σ_k C(α_k)`.
    pub cost: f64,
    pub diagnostics: SmcDiagnostics,
}

impl IncrementEstimate {
    /// `F^N_α(ψ_φ)`.
    pub fn f_phi(&self) -> f64 {
        self.log_z.exp() * self.psi_phi
    }

    /// `F^N_α(ψ_1)`.
    pub fn f_one(&self) -> f64 {
        self.log_z.exp() * self.psi_one
    }
}

#[derive(Clone, Debug)]
struct Particle {
    state: Vec<f64>,
    evals: Vec<Evaluation>,
    ll_max: f64,
}

fn evaluate_coupled(
    model: &dyn Model,
    subs: &[SignedSubIndex],
    finest: &MultiIndex,
    state: Vec<f64>,
) -> Result<Particle> {
    let mut evals = Vec::with_capacity(subs.len());
    let mut ll_max = f64::NEG_INFINITY;
    for s in subs {
        let e = model.evaluate(&s.index, finest, &state)?;
        if e.log_likelihood.is_nan() {
            return Err(Error::Solver(format!("NaN log-likelihood at {}", s.index)).at_index(&s.index));
        }
        ll_max = ll_max.max(e.log_likelihood);
        evals.push(e);
    }
    Ok(Particle { state, evals, ll_max })
}

/// `(ψ_φ, ψ_1)` for one particle.
fn psi(subs: &[SignedSubIndex], p: &Particle) -> (f64, f64) {
    let (mut phi, mut one) = (0.0, 0.0);
    for (s, e) in subs.iter().zip(&p.evals) {
        let w = f64::from(s.sign) * (e.log_likelihood - p.ll_max).exp();
        phi += w * e.qoi;
        one += w;
    }
    (phi, one)
}

/// `Σ_k ι_k ω_k ζ_k` from per-sub-index log-likelihoods and `ζ` values.
pub fn psi_evaluate(signs: &[i8], log_likelihoods: &[f64], zeta: &[f64]) -> f64 {
    let m = log_likelihoods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    signs
        .iter()
        .zip(log_likelihoods)
        .zip(zeta)
        .map(|((&s, &l), &z)| f64::from(s) * (l - m).exp() * z)
        .sum()
}

fn next_adaptive_temperature(ll: &[f64], tau: f64, target: f64) -> f64 {
    let ess_at = |t: f64| {
        let lw: Vec<f64> = ll.iter().map(|l| (t - tau) * l).collect();
        let (w, _) = normalize_log_weights(&lw);
        effective_sample_size(&w) / ll.len() as f64
    };
    if ess_at(1.0) >= target {
        return 1.0;
    }
    let (mut lo, mut hi) = (tau, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ess_at(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // guarantee progress
    lo.max(tau + 1e-6).min(1.0)
}

fn coordinate_sd(particles: &[Particle]) -> Vec<f64> {
    let n = particles.len() as f64;
    let d = particles[0].state.len();
    (0..d)
        .map(|c| {
            let m = particles.iter().map(|p| p.state[c]).sum::<f64>() / n;
            let v = particles.iter().map(|p| (p.state[c] - m).powi(2)).sum::<f64>() / n;
            v.sqrt()
        })
        .collect()
}

/// Cap on `particles × state length` for one run (1 GiB of `f64`).
pub const MAX_STATE_VALUES: usize = 1 << 27;

/// Run the coupled SMC sampler for `Δ` at `alpha` with boundary `offset`.
///
/// Passing `offset = alpha` gives the plain single-level sampler for `π_α`.
pub fn run_coupled_smc<R: Rng + ?Sized>(
    model: &dyn Model,
    alpha: &MultiIndex,
    offset: &MultiIndex,
    cfg: &SmcConfig,
    n: usize,
    rng: &mut R,
) -> Result<IncrementEstimate> {
    if n < 2 {
        return Err(Error::invalid("need at least two particles"));
    }
    cfg.validate()?;
    if alpha.dim() != offset.dim() || !alpha.dominates(offset) {
        return Err(Error::BelowOffset {
            index: alpha.clone(),
            offset: offset.clone(),
        });
    }
    if let Some(max) = model.max_level() {
        if alpha.components().iter().any(|&a| a > max) {
            return Err(Error::ResourceLimit(format!(
                "{alpha} exceeds the maximum level {max} of model `{}`",
                model.name()
            )));
        }
    }
    let len = model.state_len(alpha);
    if n.saturating_mul(len) > MAX_STATE_VALUES {
        return Err(Error::ResourceLimit(format!(
            "{n} particles of length {len} at {alpha}"
        )));
    }
    let subs = subindex_expansion_from(alpha, offset);
    let unit_cost: f64 = subs.iter().map(|s| model.cost(&s.index)).sum();
    let prior = model.prior();

    let mut particles = Vec::with_capacity(n);
    for _ in 0..n {
        let x = prior.sample(len, rng);
        particles.push(evaluate_coupled(model, &subs, alpha, x)?);
    }
    let mut diag = SmcDiagnostics {
        evaluations: n,
        ..Default::default()
    };
    let fixed = cfg.schedule.fixed_temperatures()?;
    let max_stages = match (&fixed, &cfg.schedule) {
        (Some(t), _) => t.len(),
        (None, Schedule::Adaptive { max_stages, .. }) => *max_stages,
        _ => unreachable!(),
    };

    let mut log_z = 0.0;
    let mut log_w = vec![0.0; n]; // normalized-weight logs carried between stages
    let mut tau = 0.0;
    for stage in 0..max_stages {
        if tau >= 1.0 {
            break;
        }
        let next = match (&fixed, &cfg.schedule) {
            (Some(t), _) => t[stage],
            (None, Schedule::Adaptive { target_ess, .. }) => {
                if stage + 1 == max_stages {
                    1.0
                } else {
                    let ll: Vec<f64> = particles.iter().map(|p| p.ll_max).collect();
                    next_adaptive_temperature(&ll, tau, *target_ess)
                }
            }
            _ => unreachable!(),
        };
        let dt = next - tau;
        let incr: Vec<f64> = particles.iter().map(|p| dt * p.ll_max).collect();
        let (_, lse_prev) = normalize_log_weights(&log_w);
        let combined: Vec<f64> = log_w.iter().zip(&incr).map(|(a, b)| a + b).collect();
        let (w, lse) = normalize_log_weights(&combined);
        if !lse.is_finite() {
            let mx = particles.iter().map(|p| p.ll_max).fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::DegeneratePopulation {
                stage,
                tau: next,
                max_log_likelihood: mx,
            });
        }
        // Z_j = Z_{j-1} · Σ_i W_i H(x_i) with normalized W
        log_z += lse - lse_prev;
        let (wi, _) = normalize_log_weights(&incr);
        diag.ess.push(effective_sample_size(&wi) / n as f64);
        diag.temperatures.push(next);
        tau = next;

        let ess = effective_sample_size(&w) / n as f64;
        let do_resample = cfg.ess_threshold.is_none_or(|t| ess < t);
        diag.resampled.push(do_resample);
        if do_resample {
            let anc = resample(cfg.resampling, &w, rng);
            particles = anc.iter().map(|&i| particles[i].clone()).collect();
            log_w = vec![0.0; n];
        } else {
            log_w = w.iter().map(|x| x.ln()).collect();
        }

        let scale: Vec<f64> = if cfg.adaptive_step {
            coordinate_sd(&particles).iter().map(|s| cfg.step_size * s.max(1e-12)).collect()
        } else {
            vec![cfg.step_size; len]
        };
        let mut accepted = 0usize;
        for p in particles.iter_mut() {
            for _ in 0..cfg.mcmc_steps {
                let prop = propose(prior, &p.state, &scale, rng);
                let cand = evaluate_coupled(model, &subs, alpha, prop)?;
                diag.evaluations += 1;
                let log_u: f64 = rng.random::<f64>().ln();
                if log_u < tau * (cand.ll_max - p.ll_max) {
                    *p = cand;
                    accepted += 1;
                }
            }
        }
        let moves = (n * cfg.mcmc_steps).max(1);
        diag.acceptance.push(accepted as f64 / moves as f64);
    }

    let (w, _) = normalize_log_weights(&log_w);
    let (mut psi_phi, mut psi_one) = (0.0, 0.0);
    for (p, wi) in particles.iter().zip(&w) {
        let (a, b) = psi(&subs, p);
        psi_phi += wi * a;
        psi_one += wi * b;
    }
    Ok(IncrementEstimate {
        alpha: alpha.clone(),
        particles: n,
        log_z,
        psi_phi,
        psi_one,
        cost: diag.evaluations as f64 * unit_cost,
        diagnostics: diag,
    })
}

/// Draw one standard-normal vector; used by kernels and tests.
pub(crate) fn standard_normals<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::quadrature::integrate;
    use crate::models::toy::ToyModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psi_examples() {
        let (l1, l0) = (0.5f64.ln(), 0.25f64.ln());
        assert!((psi_evaluate(&[1, -1], &[l1, l0], &[1.0, 1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(psi_evaluate(&[1], &[-3.0], &[0.7]), 0.7);
        assert_eq!(psi_evaluate(&[1, -1, -1, 1], &[-1.0; 4], &[2.0; 4]), 0.0);
    }

    #[test]
    fn schedules() {
        let t = Schedule::Power { stages: 4, exponent: 2.0 }.fixed_temperatures().unwrap().unwrap();
        assert_eq!(t, vec![0.0625, 0.25, 0.5625, 1.0]);
        let t = Schedule::Linear { stages: 4 }.fixed_temperatures().unwrap().unwrap();
        assert_eq!(t, vec![0.25, 0.5, 0.75, 1.0]);
        assert!(Schedule::Explicit { taus: vec![0.5, 0.4, 1.0] }.fixed_temperatures().is_err());
        assert!(Schedule::Explicit { taus: vec![0.5, 0.9] }.fixed_temperatures().is_err());
    }

    fn toy() -> ToyModel {
        let data = vec![0.05, 0.02, 0.11, 0.05, 0.17, 0.04, 0.12, 0.0, 0.08, -0.1];
        ToyModel::new(crate::models::toy::default_design(), data, 0.2).unwrap()
    }

    /// `Δ f_α(ζ)` for the toy model by quadrature over the prior.
    fn toy_increment(m: &ToyModel, level: u32, qoi: bool) -> f64 {
        let term = |l: u32| {
            integrate(
                |x| 0.5 * m.log_likelihood_at(l, x).exp() * if qoi { x * x } else { 1.0 },
                -1.0,
                1.0,
                8,
                20,
            )
        };
        if level == 0 {
            term(0)
        } else {
            term(level) - term(level - 1)
        }
    }

    #[test]
    fn single_level_estimator_is_unbiased_on_toy() {
        let m = toy();
        let a = MultiIndex::from([3]);
        let cfg = SmcConfig::default();
        let reps = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..reps {
            let e = run_coupled_smc(&m, &a, &a, &cfg, 50, &mut rng).unwrap();
            s += e.f_phi();
            s2 += e.f_phi() * e.f_phi();
        }
        let mean = s / reps as f64;
        let se = ((s2 / reps as f64 - mean * mean) / reps as f64).sqrt();
        let exact = integrate(|x| 0.5 * m.log_likelihood_at(3, x).exp() * x * x, -1.0, 1.0, 8, 20);
        assert!((mean - exact).abs() < 3.5 * se, "{mean} vs {exact} ± {se}");
    }

    #[test]
    fn increment_estimator_is_unbiased_on_toy() {
        let m = toy();
        let a = MultiIndex::from([2]);
        let cfg = SmcConfig::default();
        let reps = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut vals = Vec::new();
        for _ in 0..reps {
            let e = run_coupled_smc(&m, &a, &MultiIndex::zeros(1), &cfg, 50, &mut rng).unwrap();
            vals.push((e.f_phi(), e.f_one()));
        }
        for (k, qoi) in [(0usize, true), (1, false)] {
            let xs: Vec<f64> = vals.iter().map(|v| if k == 0 { v.0 } else { v.1 }).collect();
            let mean = xs.iter().sum::<f64>() / reps as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            let exact = toy_increment(&m, 2, qoi);
            assert!((mean - exact).abs() < 3.5 * se, "{mean} vs {exact} ± {se}");
        }
    }

    #[test]
    fn flat_likelihood_gives_prior_moments_and_unit_z() {
        let m = ToyModel::flat();
        let a = MultiIndex::from([4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = run_coupled_smc(&m, &a, &a, &SmcConfig::default(), 4000, &mut rng).unwrap();
        assert_eq!(e.log_z, 0.0);
        assert!((e.psi_phi - 1.0 / 3.0).abs() < 0.03);
        assert!((e.psi_one - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cost_counts_every_subindex_evaluation() {
        let m = toy();
        let cfg = SmcConfig::default();
        let a = MultiIndex::from([3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = run_coupled_smc(&m, &a, &MultiIndex::zeros(1), &cfg, 10, &mut rng).unwrap();
        // evaluations: 10 initial + 4 stages · 2 steps · 10
        assert_eq!(e.diagnostics.evaluations, 90);
        assert_eq!(e.cost, 90.0 * (8.0 + 4.0));
    }

    #[test]
    fn adaptive_schedule_and_ess_resampling_run() {
        let m = toy();
        let a = MultiIndex::from([3]);
        let cfg = SmcConfig {
            schedule: Schedule::Adaptive { target_ess: 0.6, max_stages: 20 },
            ess_threshold: Some(0.5),
            resampling: Resampling::Multinomial,
            adaptive_step: true,
            ..SmcConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = run_coupled_smc(&m, &a, &a, &cfg, 200, &mut rng).unwrap();
        assert_eq!(*e.diagnostics.temperatures.last().unwrap(), 1.0);
        assert!(e.f_one() > 0.0);
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let m = toy();
        let a = MultiIndex::from([2]);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            run_coupled_smc(&m, &a, &MultiIndex::zeros(1), &SmcConfig::default(), 30, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }
}
