use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::build::{build_model, DataProvenance};
use super::config::{ExperimentConfig, MethodConfig, ZMin};
use super::plan::{Plan, Planner, RungPlan};
use super::plot::{render_svg, Series};
use super::reference::{compute_reference, default_reference, Reference};
use crate::error::{Error, Result};
use crate::estimators::{estimate, single_level_estimate, EstimatorConfig};
use crate::models::Model;
use crate::rates::{fit_mse_cost, MsePoint, RateFit};
use crate::seed::{Purpose, SeedPath};

/// One realization of one method at one rung.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: String,
    /// The ladder value of the rung (target cost or tolerance).
    pub budget: f64,
    pub realization: u32,
    pub estimate: f64,
    pub squared_error: f64,
    /// Realized abstract cost.
    pub cost: f64,
    pub wall_seconds: f64,
    pub clamped: bool,
}

/// The canonical CSV row: everything except wall-clock time, which lives in
/// `timings.csv` so that reruns produce identical records.
#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    budget: f64,
    realization: u32,
    estimate: f64,
    squared_error: f64,
    cost: f64,
    clamped: bool,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    method: &'a str,
    budget: f64,
    realization: u32,
    wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub budget: f64,
    pub realization: u32,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: String,
    pub plans: Vec<RungPlan>,
    pub table: Vec<MsePoint>,
    /// Fit of `log2 MSE` against `log2 mean cost`.
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
}

impl MethodSummary {
    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub model: String,
    pub data: DataProvenance,
    pub seed: u64,
    pub realizations: usize,
    pub reference: Reference,
    pub z_min: f64,
    pub methods: Vec<MethodSummary>,
    /// Sum of the record costs.
    pub total_cost: f64,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.summary.methods.iter().find(|m| m.name == name)
    }

    /// Fraction of tasks that failed.
    pub fn failure_fraction(&self) -> f64 {
        let f = self.summary.failures.len();
        f as f64 / (f + self.records.len()).max(1) as f64
    }

    /// Records CSV in the canonical column order.
    pub fn records_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow {
                method: &r.method,
                budget: r.budget,
                realization: r.realization,
                estimate: r.estimate,
                squared_error: r.squared_error,
                cost: r.cost,
                clamped: r.clamped,
            })?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Write records, timings, MSE table, summary and plot into `dir`.
    pub fn write(&self, dir: &Path, plot: bool, json_records: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("records.csv"), self.records_csv()?)?;
        let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
        for r in &self.records {
            w.serialize(TimingRow {
                method: &r.method,
                budget: r.budget,
                realization: r.realization,
                wall_seconds: r.wall_seconds,
            })?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("mse.csv"))?;
        w.write_record(["method", "budget", "mean_cost", "mse", "realizations"])?;
        for m in &self.summary.methods {
            for p in &m.table {
                w.write_record([
                    m.name.clone(),
                    p.budget.to_string(),
                    p.mean_cost.to_string(),
                    p.mse.to_string(),
                    p.realizations.to_string(),
                ])?;
            }
        }
        w.flush()?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        if json_records {
            std::fs::write(dir.join("records.json"), serde_json::to_string_pretty(&self.records)?)?;
        }
        if plot {
            std::fs::write(dir.join("mse.svg"), self.svg())?;
        }
        Ok(())
    }

    pub fn svg(&self) -> String {
        let series: Vec<Series> = self
            .summary
            .methods
            .iter()
            .map(|m| Series {
                name: &m.name,
                points: m.table.iter().map(|p| (p.mean_cost, p.mse)).collect(),
                slope: m.slope(),
            })
            .collect();
        render_svg(&self.summary.name, &series)
    }
}

/// A built experiment: config, model and plans.
pub struct Experiment {
    pub config: ExperimentConfig,
    model: Box<dyn Model>,
    pub data: DataProvenance,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (model, data) = build_model(&config)?;
        Ok(Experiment { config, model, data })
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    pub fn planner(&self) -> Planner<'_> {
        Planner::new(&self.config, self.model())
    }

    /// Plans for every method and rung, in config order.
    pub fn plans(&self) -> Result<Vec<Vec<Plan>>> {
        let planner = self.planner();
        self.config
            .methods
            .iter()
            .map(|m| planner.plan_ladder(m, &self.config.ladder))
            .collect()
    }

    /// The reference, read from `cache_dir/reference.json` when it was
    /// computed for the same model, reference spec, SMC settings and seed.
    pub fn reference(&self, cache_dir: Option<&Path>) -> Result<Reference> {
        let key = self.reference_key()?;
        if let Some(dir) = cache_dir {
            if let Ok(text) = std::fs::read_to_string(dir.join("reference.json")) {
                if let Ok(cached) = serde_json::from_str::<CachedReference>(&text) {
                    if cached.key == key {
                        return Ok(cached.reference);
                    }
                }
            }
        }
        let reference = compute_reference(&self.config, self.model())?;
        if let Some(dir) = cache_dir {
            std::fs::create_dir_all(dir)?;
            let cached = CachedReference {
                key,
                reference: reference.clone(),
            };
            std::fs::write(dir.join("reference.json"), serde_json::to_string_pretty(&cached)?)?;
        }
        Ok(reference)
    }

    fn reference_key(&self) -> Result<serde_json::Value> {
        let c = &self.config;
        let spec = c.reference.clone().unwrap_or_else(|| default_reference(c));
        Ok(serde_json::json!({
            "model": serde_json::to_value(&c.model)?,
            "reference": serde_json::to_value(&spec)?,
            "smc": serde_json::to_value(&c.smc)?,
            "seed": c.seed,
        }))
    }

    /// `z_min`, from a pilot single-level run when relative.
    pub fn z_min(&self) -> Result<f64> {
        match self.config.z_min {
            ZMin::Absolute(v) => Ok(v),
            ZMin::Relative(f) => {
                let seed = SeedPath::new(self.config.seed).purpose(Purpose::Pilot);
                let level = self.model.start_level();
                let pilot = single_level_estimate(self.model(), &level, 200, &self.config.smc, f64::MIN_POSITIVE, &seed)?;
                let z = pilot.denominator_raw;
                if !(z > 0.0 && z.is_finite()) {
                    return Err(Error::Solver(format!("pilot normalizing constant is {z}")));
                }
                Ok(f * z)
            }
        }
    }

    /// Run every method × rung × realization against `reference`.
    pub fn run(&self, reference: &Reference) -> Result<ExperimentOutput> {
        let plans = self.plans()?;
        let z_min = self.z_min()?;
        let cfg = &self.config;
        let tasks: Vec<(usize, usize, u32)> = (0..cfg.methods.len())
            .flat_map(|m| {
                (0..cfg.ladder.values().len())
                    .flat_map(move |b| (0..cfg.realizations as u32).map(move |r| (m, b, r)))
            })
            .collect();
        let outcomes: Vec<(f64, Result<crate::estimators::EstimateResult>)> = tasks
            .par_iter()
            .map(|&(m, b, r)| {
                let est = EstimatorConfig {
                    kind: plans[m][b].kind.clone(),
                    z_min,
                    smc: cfg.smc.clone(),
                };
                let seed = SeedPath::new(cfg.seed).method(m as u32).budget(b as u32).realization(r);
                let start = Instant::now();
                let out = estimate(self.model(), &est, &seed);
                (start.elapsed().as_secs_f64(), out)
            })
            .collect();

        let mut records = Vec::with_capacity(tasks.len());
        let mut failures = Vec::new();
        for (&(m, b, r), (wall, out)) in tasks.iter().zip(outcomes) {
            let method = cfg.methods[m].name().to_string();
            let budget = cfg.ladder.values()[b];
            match out {
                Ok(e) if e.value.is_finite() => records.push(ExperimentRecord {
                    method,
                    budget,
                    realization: r,
                    estimate: e.value,
                    squared_error: (e.value - reference.value).powi(2),
                    cost: e.total_cost,
                    wall_seconds: wall,
                    clamped: e.clamped,
                }),
                Ok(e) => failures.push(Failure {
                    method,
                    budget,
                    realization: r,
                    error: format!("non-finite estimate {}", e.value),
                }),
                Err(e) => failures.push(Failure {
                    method,
                    budget,
                    realization: r,
                    error: e.to_string(),
                }),
            }
        }

        let mut warnings = Vec::new();
        let methods: Vec<MethodSummary> = cfg
            .methods
            .iter()
            .zip(&plans)
            .map(|(m, p)| summarize_method(m, p, &records))
            .collect();
        for m in &methods {
            if let Some(e) = &m.fit_error {
                warnings.push(format!("{}: no MSE-cost fit ({e})", m.name));
            }
            let capped: Vec<String> = m.plans.iter().filter(|p| p.level_capped).map(|p| p.rung.to_string()).collect();
            if !capped.is_empty() {
                warnings.push(format!(
                    "{}: level capped at max_relative_level for rungs {}",
                    m.name,
                    capped.join(", ")
                ));
            }
        }
        let min_rmse = plans
            .iter()
            .flatten()
            .map(|p| p.record.tolerance)
            .fold(f64::INFINITY, f64::min);
        if reference.standard_error > 0.1 * min_rmse {
            warnings.push(format!(
                "reference standard error {:e} exceeds 10% of the smallest target RMSE {:e}",
                reference.standard_error, min_rmse
            ));
        }
        let clamped = records.iter().filter(|r| r.clamped).count();
        if clamped > 0 {
            warnings.push(format!("{clamped} estimates hit the z_min clamp"));
        }
        let total_cost = records.iter().map(|r| r.cost).sum();
        Ok(ExperimentOutput {
            records,
            summary: Summary {
                name: cfg.name.clone(),
                model: cfg.model.family().to_string(),
                data: self.data.clone(),
                seed: cfg.seed,
                realizations: cfg.realizations,
                reference: reference.clone(),
                z_min,
                methods,
                total_cost,
                failures,
                warnings,
            },
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    key: serde_json::Value,
    reference: Reference,
}

fn summarize_method(method: &MethodConfig, plans: &[Plan], records: &[ExperimentRecord]) -> MethodSummary {
    let rows: Vec<(f64, f64, f64)> = records
        .iter()
        .filter(|r| r.method == method.name())
        .map(|r| (r.budget, r.cost, r.squared_error))
        .collect();
    let (fit, table, fit_error) = match fit_mse_cost(&rows) {
        Ok((fit, table)) => (Some(fit), table, None),
        Err(e) => (None, Vec::new(), Some(e.to_string())),
    };
    MethodSummary {
        name: method.name().to_string(),
        plans: plans.iter().map(|p| p.record.clone()).collect(),
        table,
        fit,
        fit_error,
    }
}

/// Build, fetch the reference (cached in `out_dir`), run, write outputs and
/// enforce the failure threshold. Outputs are written even when the
/// threshold is exceeded.
pub fn run_experiment(config: ExperimentConfig, out_dir: Option<&Path>, json_records: bool) -> Result<ExperimentOutput> {
    let exp = Experiment::new(config)?;
    let reference = exp.reference(out_dir)?;
    let out = exp.run(&reference)?;
    if let Some(dir) = out_dir {
        out.write(dir, exp.config.output.plot, json_records)?;
    }
    if out.failure_fraction() > exp.config.max_failure_fraction {
        return Err(Error::FailureThreshold {
            failed: out.summary.failures.len(),
            total: out.summary.failures.len() + out.records.len(),
        });
    }
    Ok(out)
}
