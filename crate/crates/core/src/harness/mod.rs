//! Experiment harness: strict TOML configs, budget-to-parameter planning,
//! reference values, realization farming and CSV/JSON/SVG output.
//!
//! Every task `(method, rung, realization)` runs on its own seed path, and
//! results are reduced in task order, so the records depend only on the
//! config and master seed.

mod build;
mod config;
mod plan;
mod plot;
mod reference;
mod run;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use build::{build_model, load_data, DataProvenance, DataSet};
pub use config::{
    AuditConfig, ExperimentConfig, Ladder, MethodConfig, ModelConfig, OutputConfig, PlanningRates,
    PointProcessConfig, ReferenceConfig, SetShape, ZMin,
};
pub use plan::{evaluations_per_particle, Plan, Planner, RungPlan};
pub use plot::{render_svg, Series};
pub use reference::{compute_reference, default_reference, quadrature_reference, Reference};
pub use run::{run_experiment, Experiment, ExperimentOutput, ExperimentRecord, Failure, MethodSummary, Summary};

use crate::error::{Error, Result};
use crate::rates::{estimate_increment_rates, IncrementRates, Sweep};
use crate::seed::SeedPath;

/// Rates fitted by the `rates` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub model: String,
    pub sweeps: Vec<SweepReport>,
    /// Per-direction weak rate `s_i` from the direction sweeps.
    pub s: Vec<Option<f64>>,
    /// Per-direction strong rate `β_i` from the direction sweeps.
    pub beta: Vec<Option<f64>>,
    /// Cost exponents of the model.
    pub gamma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep: Sweep,
    pub rates: IncrementRates,
}

/// Run the increment-rate audit in `cfg.audit`.
pub fn run_rates(cfg: &ExperimentConfig) -> Result<RatesReport> {
    let audit = cfg
        .audit
        .as_ref()
        .ok_or_else(|| Error::config("audit", "the rates subcommand needs an [audit] block"))?;
    let (model, _) = build_model(cfg)?;
    let offset = model.start_level();
    let d = model.dim();
    let mut s = vec![None; d];
    let mut beta = vec![None; d];
    let mut sweeps = Vec::new();
    for (i, sweep) in audit.sweeps.iter().enumerate() {
        let seed = SeedPath::new(cfg.seed).method(i as u32);
        let rates = estimate_increment_rates(model.as_ref(), sweep, &offset, &audit.method, &seed)?;
        if let Sweep::Direction { direction, .. } = sweep {
            s[*direction] = Some(rates.s());
            beta[*direction] = Some(rates.beta());
        }
        sweeps.push(SweepReport {
            sweep: sweep.clone(),
            rates,
        });
    }
    Ok(RatesReport {
        model: cfg.model.family().to_string(),
        sweeps,
        s,
        beta,
        gamma: model.cost_rates().to_vec(),
    })
}

/// Synthesize (or load) the observations of `cfg` and write them to `path`
/// in the format the model's `data_file` / `points_file` expects.
pub fn simulate_data(cfg: &ExperimentConfig, path: &Path) -> Result<DataProvenance> {
    let (data, provenance) = load_data(cfg)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    data.write_csv(path)?;
    Ok(provenance)
}

/// Result of `validate`: the plan of every method and rung.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub name: String,
    pub model: String,
    pub data: DataProvenance,
    pub methods: Vec<(String, Vec<RungPlan>)>,
    /// Sum of predicted costs over all rungs, methods and realizations.
    pub predicted_total_cost: f64,
}

/// Schema and feasibility check: builds the model and plans every rung
/// without running any sampler.
pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let exp = Experiment::new(cfg.clone())?;
    let plans = exp.plans()?;
    let predicted: f64 = plans.iter().flatten().map(|p| p.record.predicted_cost).sum();
    Ok(ValidationReport {
        name: cfg.name.clone(),
        model: cfg.model.family().to_string(),
        data: exp.data.clone(),
        methods: cfg
            .methods
            .iter()
            .zip(plans)
            .map(|(m, p)| (m.name().to_string(), p.into_iter().map(|p| p.record).collect()))
            .collect(),
        predicted_total_cost: predicted * cfg.realizations as f64,
    })
}
