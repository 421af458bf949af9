use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelConfig, ReferenceConfig};
use crate::error::{Error, Result};
use crate::estimators::single_level_estimate;
use crate::models::quadrature::composite_rule;
use crate::models::{Model, Prior};
use crate::multiindex::MultiIndex;
use crate::seed::{Purpose, SeedPath};

/// A reference value of `π(φ)` with its standard error (zero for quadrature).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub value: f64,
    pub standard_error: f64,
    pub spec: ReferenceConfig,
}

/// The reference used when a config does not name one.
pub fn default_reference(cfg: &ExperimentConfig) -> ReferenceConfig {
    match &cfg.model {
        ModelConfig::Toy { .. } => ReferenceConfig::Quadrature {
            level: vec![16],
            panels: 16,
            order: 8,
        },
        ModelConfig::Pde2d { .. } => ReferenceConfig::Quadrature {
            level: vec![7, 7],
            panels: 2,
            order: 8,
        },
        ModelConfig::Lgc(c) | ModelConfig::Lgp(c) => ReferenceConfig::Smc {
            level: c.start.iter().map(|s| s + 3).collect(),
            particles: 2000,
            seeds: 10,
        },
    }
}

pub fn compute_reference(cfg: &ExperimentConfig, model: &dyn Model) -> Result<Reference> {
    let spec = cfg.reference.clone().unwrap_or_else(|| default_reference(cfg));
    let (value, standard_error) = match &spec {
        ReferenceConfig::Value { value, standard_error } => (*value, *standard_error),
        ReferenceConfig::Quadrature { level, panels, order } => {
            (quadrature_reference(model, &MultiIndex::from(level.clone()), *panels, *order)?, 0.0)
        }
        ReferenceConfig::Smc { level, particles, seeds } => {
            let level = MultiIndex::from(level.clone());
            let runs: Vec<Result<f64>> = (0..*seeds)
                .into_par_iter()
                .map(|s| {
                    let seed = SeedPath::new(cfg.seed).purpose(Purpose::Reference).realization(s as u32);
                    single_level_estimate(model, &level, *particles, &cfg.smc, f64::MIN_POSITIVE, &seed)
                        .map(|e| e.value)
                })
                .collect();
            let values: Vec<f64> = runs.into_iter().collect::<Result<_>>()?;
            mean_and_se(&values)
        }
    };
    Ok(Reference {
        value,
        standard_error,
        spec,
    })
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `∫ φ L_α dπ_0 / ∫ L_α dπ_0` by tensor Gauss–Legendre over a uniform prior.
pub fn quadrature_reference(model: &dyn Model, level: &MultiIndex, panels: usize, order: usize) -> Result<f64> {
    let Prior::UniformBox { lo, hi } = model.prior() else {
        return Err(Error::config("reference.kind", "quadrature needs a uniform prior"));
    };
    if level.dim() != model.dim() {
        return Err(Error::config("reference.level", "dimension mismatch"));
    }
    let len = model.state_len(level);
    let rule = composite_rule(lo, hi, panels, order);
    let mut nodes: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..len {
        nodes = nodes
            .into_iter()
            .flat_map(|(x, w)| {
                rule.iter().map(move |&(xi, wi)| {
                    let mut y = x.clone();
                    y.push(xi);
                    (y, w * wi)
                })
            })
            .collect();
    }
    let evals: Vec<Result<(f64, f64, f64)>> = nodes
        .par_iter()
        .map(|(x, w)| model.evaluate(level, level, x).map(|e| (e.log_likelihood, e.qoi, *w)))
        .collect();
    let evals: Vec<(f64, f64, f64)> = evals.into_iter().collect::<Result<_>>()?;
    let shift = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (ll, q, w) in evals {
        let l = (ll - shift).exp() * w;
        num += l * q;
        den += l;
    }
    Ok(num / den)
}
