//! Turning a rung of the ladder into estimator parameters.
//!
//! A tolerance `ε` is split evenly between squared bias and variance. The
//! deterministic methods take the smallest relative level `k` whose predicted
//! bias is below `ε/√2` and size `N` (or `N_α`) for variance `ε²/2`; the
//! randomized method has no bias term and only sizes `N`.
//!
//! A budget `B` is spent in full at every candidate level `k`, and the level
//! with the smallest predicted `bias² + variance` wins. The recorded
//! tolerance is the predicted root-MSE of the chosen plan.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Ladder, MethodConfig, SetShape};
use crate::error::{Error, Result};
use crate::estimators::{allocate_samples_deterministic, EstimatorKind};
use crate::models::Model;
use crate::multiindex::{subindex_expansion_from, AllocationDistribution, IndexSet, IndexSetKind, MultiIndex};
use crate::smc::{Schedule, SmcConfig};

/// What a rung resolved to, recorded in the summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungPlan {
    /// The ladder value (budget or tolerance).
    pub rung: f64,
    /// Tolerance the plan was derived from.
    pub tolerance: f64,
    /// Relative level of the deterministic methods.
    pub level: Option<u32>,
    /// The level was capped at `max_relative_level` before meeting the bias target.
    pub level_capped: bool,
    /// Particle counts per index (deterministic methods).
    pub particles: BTreeMap<String, usize>,
    /// Total samples `N` (randomized method).
    pub n: Option<usize>,
    pub predicted_cost: f64,
}

/// A planned run: the summary record and the estimator to execute.
#[derive(Clone, Debug)]
pub struct Plan {
    pub record: RungPlan,
    pub kind: EstimatorKind,
}

/// Coupled-state evaluations per particle of one SMC run.
pub fn evaluations_per_particle(smc: &SmcConfig) -> f64 {
    let stages = match &smc.schedule {
        Schedule::Linear { stages } | Schedule::Power { stages, .. } => *stages,
        Schedule::Explicit { taus } => taus.len(),
        Schedule::Adaptive { max_stages, .. } => *max_stages,
    };
    1.0 + (stages * smc.mcmc_steps) as f64
}

pub struct Planner<'a> {
    model: &'a dyn Model,
    offset: MultiIndex,
    s: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    bias_constant: f64,
    variance_constant: f64,
    max_level: u32,
    evaluations: f64,
}

impl<'a> Planner<'a> {
    pub fn new(cfg: &ExperimentConfig, model: &'a dyn Model) -> Self {
        let r = &cfg.rates;
        Planner {
            model,
            offset: model.start_level(),
            s: r.s.clone(),
            beta: r.beta.clone(),
            gamma: r.gamma.clone().unwrap_or_else(|| model.cost_rates().to_vec()),
            bias_constant: r.bias_constant,
            variance_constant: r.variance_constant,
            max_level: r.max_relative_level,
            evaluations: evaluations_per_particle(&cfg.smc),
        }
    }

    pub fn offset(&self) -> &MultiIndex {
        &self.offset
    }

    /// Abstract cost of one particle of the coupled sampler at `alpha`.
    pub fn particle_cost(&self, alpha: &MultiIndex) -> f64 {
        self.particle_cost_from(alpha, &self.offset)
    }

    fn particle_cost_from(&self, alpha: &MultiIndex, offset: &MultiIndex) -> f64 {
        let unit: f64 = subindex_expansion_from(alpha, offset)
            .iter()
            .map(|s| self.model.cost(&s.index))
            .sum();
        self.evaluations * unit
    }

    fn relative(&self, k: u32) -> MultiIndex {
        self.offset.add(&MultiIndex::uniform(self.offset.dim(), k))
    }

    /// `c_v Π 2^{-β_i a_i}`.
    fn variance(&self, alpha: &MultiIndex) -> f64 {
        let a = alpha.checked_sub(&self.offset).expect("member of a set above the offset");
        self.variance_constant
            * a.components()
                .iter()
                .zip(&self.beta)
                .map(|(&ai, b)| (-(ai as f64) * b).exp2())
                .product::<f64>()
    }

    /// Predicted bias `c_b Σ_{α ∉ I} Π 2^{-s_i a_i}` of a downward-closed set.
    fn bias(&self, members: &[MultiIndex]) -> f64 {
        let total: f64 = self.s.iter().map(|s| 1.0 / (1.0 - (-s).exp2())).product();
        let inside: f64 = members
            .iter()
            .map(|m| {
                let a = m.checked_sub(&self.offset).expect("member above offset");
                a.components()
                    .iter()
                    .zip(&self.s)
                    .map(|(&ai, s)| (-(ai as f64) * s).exp2())
                    .product::<f64>()
            })
            .sum();
        self.bias_constant * (total - inside).max(0.0)
    }

    fn set(&self, shape: &SetShape, k: u32) -> Result<IndexSet> {
        let d = self.offset.dim();
        let kind = match shape {
            SetShape::TensorProduct => IndexSetKind::TensorProduct { levels: vec![k; d] },
            SetShape::TotalDegree { weights } => {
                let w_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
                IndexSetKind::TotalDegree {
                    level: k as f64 * w_min,
                    weights: weights.clone(),
                }
            }
        };
        IndexSet::new(kind, self.offset.clone())
    }

    fn members_for(&self, method: &MethodConfig, k: u32) -> Result<Vec<MultiIndex>> {
        Ok(match method {
            MethodConfig::SingleLevel { .. } => vec![self.relative(k)],
            MethodConfig::Mismc { index_set, .. } => self.set(index_set, k)?.members().to_vec(),
            MethodConfig::Rmismc { .. } => unreachable!("randomized plans have no level"),
        })
    }

    /// Bias of the single-level estimator at relative level `k`: that of the
    /// tensor-product set it telescopes from.
    fn level_bias(&self, method: &MethodConfig, k: u32) -> Result<f64> {
        let members = match method {
            MethodConfig::SingleLevel { .. } => self.set(&SetShape::TensorProduct, k)?.members().to_vec(),
            _ => self.members_for(method, k)?,
        };
        Ok(self.bias(&members))
    }

    /// Smallest level meeting the bias target, and whether the cap was hit.
    fn level_for(&self, method: &MethodConfig, eps: f64) -> Result<(u32, bool)> {
        for k in 0..=self.max_level {
            if self.level_bias(method, k)? <= eps / std::f64::consts::SQRT_2 {
                return Ok((k, false));
            }
        }
        Ok((self.max_level, true))
    }

    /// `Σ_α V_α / p_α` for the allocation distribution.
    fn randomized_variance(&self, dist: &AllocationDistribution) -> f64 {
        self.variance_constant
            * dist
                .beta()
                .iter()
                .zip(dist.gamma())
                .map(|(b, g)| {
                    let r = (-(b + g) / 2.0).exp2();
                    1.0 / ((1.0 - r) * (1.0 - (-(b - g) / 2.0).exp2()))
                })
                .product::<f64>()
    }

    /// Expected particle cost under the allocation distribution, in closed form.
    pub fn expected_particle_cost(&self, dist: &AllocationDistribution) -> Result<f64> {
        let mut e = self.evaluations;
        for (i, (b, g)) in dist.beta().iter().zip(dist.gamma()).enumerate() {
            let r = (-(b + g) / 2.0).exp2();
            let c = self.model.cost_rates()[i];
            let q = r * c.exp2();
            if q >= 1.0 {
                return Err(Error::config(
                    format!("rates.beta[{i}]"),
                    "expected cost per sample is infinite for these rates",
                ));
            }
            let o = self.offset.get(i) as f64;
            e *= (o * c).exp2() * (1.0 - r) * (1.0 + r) / (1.0 - q);
        }
        Ok(e)
    }

    pub fn distribution(&self) -> Result<AllocationDistribution> {
        AllocationDistribution::new(self.beta.clone(), self.gamma.clone(), self.offset.clone())
    }

    /// Plan for target root-MSE `eps`.
    pub fn for_tolerance(&self, method: &MethodConfig, eps: f64) -> Result<Plan> {
        let var_target = eps * eps / 2.0;
        match method {
            MethodConfig::SingleLevel { .. } => {
                let (k, capped) = self.level_for(method, eps)?;
                let level = self.relative(k);
                let n = ((self.variance_constant / var_target).ceil() as usize).max(2);
                Ok(self.single_level(eps, eps, k, capped, level, n))
            }
            MethodConfig::Mismc { index_set, n_floor, .. } => {
                let (k, capped) = self.level_for(method, eps)?;
                let set = self.set(index_set, k)?;
                let sum: f64 = set
                    .members()
                    .iter()
                    .map(|a| (self.variance(a) * self.particle_cost(a)).sqrt())
                    .sum();
                let particles = set
                    .members()
                    .iter()
                    .map(|a| {
                        let raw = (self.variance(a) / self.particle_cost(a)).sqrt() * sum / var_target;
                        (a.clone(), (raw.ceil() as usize).max(*n_floor))
                    })
                    .collect();
                Ok(self.mismc(eps, eps, k, capped, set, particles))
            }
            MethodConfig::Rmismc { n_min, .. } => {
                let dist = self.distribution()?;
                let raw = self.randomized_variance(&dist) / var_target;
                let blocks = ((raw / *n_min as f64).ceil() as usize).max(1);
                self.randomized(eps, eps, dist, blocks * n_min, *n_min)
            }
        }
    }

    /// Plan that spends about `budget`.
    pub fn for_budget(&self, method: &MethodConfig, budget: f64) -> Result<Plan> {
        if let MethodConfig::Rmismc { n_min, .. } = method {
            let dist = self.distribution()?;
            let per_block = *n_min as f64 * self.expected_particle_cost(&dist)?;
            let blocks = (budget / per_block).floor() as usize;
            if blocks == 0 {
                return Err(Error::InfeasibleBudget {
                    budget,
                    minimum: per_block,
                });
            }
            let eps = (self.randomized_variance(&dist) / (blocks * n_min) as f64).sqrt();
            return self.randomized(budget, eps, dist, blocks * n_min, *n_min);
        }
        let mut best: Option<(f64, Plan)> = None;
        let mut infeasible = None;
        for k in 0..=self.max_level {
            match self.budget_plan_at(method, budget, k) {
                Ok((mse, plan)) => {
                    if best.as_ref().is_none_or(|(m, _)| mse < *m) {
                        best = Some((mse, plan));
                    }
                }
                Err(e @ Error::InfeasibleBudget { .. }) => {
                    infeasible.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        let Some((mse, mut plan)) = best else {
            return Err(infeasible.expect("at least one level was tried"));
        };
        if plan.record.level == Some(self.max_level) {
            plan.record.level_capped = self
                .budget_plan_at(method, budget, self.max_level + 1)
                .is_ok_and(|(above, _)| above < mse);
        }
        Ok(plan)
    }

    /// Plan at relative level `k` spending `budget`, with its predicted MSE.
    fn budget_plan_at(&self, method: &MethodConfig, budget: f64, k: u32) -> Result<(f64, Plan)> {
        let bias = self.level_bias(method, k)?;
        match method {
            MethodConfig::SingleLevel { .. } => {
                let level = self.relative(k);
                let c = self.particle_cost_from(&level, &level);
                let n = (budget / c).floor() as usize;
                if n < 2 {
                    return Err(Error::InfeasibleBudget {
                        budget,
                        minimum: 2.0 * c,
                    });
                }
                let mse = bias * bias + self.variance_constant / n as f64;
                Ok((mse, self.single_level(budget, mse.sqrt(), k, false, level, n)))
            }
            MethodConfig::Mismc { index_set, n_floor, .. } => {
                let set = self.set(index_set, k)?;
                let particles =
                    allocate_samples_deterministic(&set, &self.beta, &self.gamma, budget, *n_floor, |a| {
                        self.particle_cost(a)
                    })?;
                let var: f64 = particles.iter().map(|(a, &n)| self.variance(a) / n as f64).sum();
                let mse = bias * bias + var;
                Ok((mse, self.mismc(budget, mse.sqrt(), k, false, set, particles)))
            }
            MethodConfig::Rmismc { .. } => unreachable!("randomized plans have no level"),
        }
    }

    fn single_level(&self, rung: f64, eps: f64, k: u32, capped: bool, level: MultiIndex, n: usize) -> Plan {
        let mut particles = BTreeMap::new();
        particles.insert(level.to_string(), n);
        Plan {
            record: RungPlan {
                rung,
                tolerance: eps,
                level: Some(k),
                level_capped: capped,
                particles,
                n: None,
                predicted_cost: n as f64 * self.particle_cost_from(&level, &level),
            },
            kind: EstimatorKind::SingleLevel { level, particles: n },
        }
    }

    fn mismc(
        &self,
        rung: f64,
        eps: f64,
        k: u32,
        capped: bool,
        set: IndexSet,
        particles: BTreeMap<MultiIndex, usize>,
    ) -> Plan {
        let predicted_cost = particles.iter().map(|(a, &n)| n as f64 * self.particle_cost(a)).sum();
        Plan {
            record: RungPlan {
                rung,
                tolerance: eps,
                level: Some(k),
                level_capped: capped,
                particles: particles.iter().map(|(a, &n)| (a.to_string(), n)).collect(),
                n: None,
                predicted_cost,
            },
            kind: EstimatorKind::Mismc { set, particles },
        }
    }

    fn randomized(
        &self,
        rung: f64,
        eps: f64,
        distribution: AllocationDistribution,
        n: usize,
        n_min: usize,
    ) -> Result<Plan> {
        let predicted_cost = n as f64 * self.expected_particle_cost(&distribution)?;
        Ok(Plan {
            record: RungPlan {
                rung,
                tolerance: eps,
                level: None,
                level_capped: false,
                particles: BTreeMap::new(),
                n: Some(n),
                predicted_cost,
            },
            kind: EstimatorKind::Randomized { distribution, n, n_min },
        })
    }

    /// Plans for every rung of `ladder`.
    pub fn plan_ladder(&self, method: &MethodConfig, ladder: &Ladder) -> Result<Vec<Plan>> {
        match ladder {
            Ladder::Budget { values } => values.iter().map(|&b| self.for_budget(method, b)).collect(),
            Ladder::Tolerance { values } => values.iter().map(|&e| self.for_tolerance(method, e)).collect(),
        }
    }
}
