use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::point_process::{PointProcessKind, DEFAULT_SMOOTHNESS, DEFAULT_START};
use crate::models::spectral::Truncation;
use crate::rates::{IncrementMethod, Sweep};
use crate::smc::SmcConfig;

/// One experiment: a model, the methods to compare, a budget ladder and the
/// number of realizations per rung. Unknown keys are rejected everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub realizations: usize,
    pub model: ModelConfig,
    #[serde(default)]
    pub smc: SmcConfig,
    pub rates: PlanningRates,
    pub ladder: Ladder,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
    #[serde(default)]
    pub z_min: ZMin,
    #[serde(default = "default_failure_fraction")]
    pub max_failure_fraction: f64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub audit: Option<AuditConfig>,
}

fn default_failure_fraction() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Toy {
        #[serde(default = "toy_noise")]
        noise_sd: f64,
        /// Observation points; `0.1, 0.2, …, 1.0` when absent.
        #[serde(default)]
        design: Option<Vec<f64>>,
        /// `x*`; drawn from the prior when absent.
        #[serde(default)]
        truth: Option<f64>,
        /// CSV with columns `z,y`; synthetic data when absent.
        #[serde(default)]
        data_file: Option<PathBuf>,
        #[serde(default)]
        data_seed: Option<u64>,
    },
    Pde2d {
        #[serde(default = "pde_noise")]
        noise_sd: f64,
        #[serde(default)]
        truth: Option<[f64; 2]>,
        #[serde(default = "pde_data_level")]
        data_level: [u32; 2],
        /// CSV with columns `z1,z2,y` at the four observation points.
        #[serde(default)]
        data_file: Option<PathBuf>,
        #[serde(default)]
        data_seed: Option<u64>,
    },
    Lgc(PointProcessConfig),
    Lgp(PointProcessConfig),
}

fn toy_noise() -> f64 {
    0.2
}

fn pde_noise() -> f64 {
    0.5
}

fn pde_data_level() -> [u32; 2] {
    [7, 7]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointProcessConfig {
    /// `(θ_1, θ_2, θ_3)`; the family default when absent.
    #[serde(default)]
    pub theta: Option<[f64; 3]>,
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default = "default_start")]
    pub start: [u32; 2],
    /// CSV with columns `z1,z2`; a synthetic pattern when absent.
    #[serde(default)]
    pub points_file: Option<PathBuf>,
    #[serde(default)]
    pub data_seed: Option<u64>,
}

fn default_smoothness() -> f64 {
    DEFAULT_SMOOTHNESS
}

fn default_start() -> [u32; 2] {
    DEFAULT_START
}

impl ModelConfig {
    pub fn family(&self) -> &'static str {
        match self {
            ModelConfig::Toy { .. } => "toy",
            ModelConfig::Pde2d { .. } => "pde2d",
            ModelConfig::Lgc(_) => "lgc",
            ModelConfig::Lgp(_) => "lgp",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelConfig::Toy { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn point_process(&self) -> Option<(PointProcessKind, &PointProcessConfig)> {
        match self {
            ModelConfig::Lgc(c) => Some((PointProcessKind::Lgc, c)),
            ModelConfig::Lgp(c) => Some((PointProcessKind::Lgp, c)),
            _ => None,
        }
    }

    pub(crate) fn data_seed(&self) -> Option<u64> {
        match self {
            ModelConfig::Toy { data_seed, .. } | ModelConfig::Pde2d { data_seed, .. } => *data_seed,
            ModelConfig::Lgc(c) | ModelConfig::Lgp(c) => c.data_seed,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        match self {
            ModelConfig::Toy { data_file, .. } | ModelConfig::Pde2d { data_file, .. } => fix(data_file),
            ModelConfig::Lgc(c) | ModelConfig::Lgp(c) => fix(&mut c.points_file),
        }
    }
}

/// Rates and constants used only to turn budgets into run parameters:
/// `|Δ f_α| ≈ c_b Π 2^{-s_i a_i}` and per-particle `V_α ≈ c_v Π 2^{-β_i a_i}`,
/// with `a = α - offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningRates {
    pub s: Vec<f64>,
    pub beta: Vec<f64>,
    /// Cost exponents; the model's when absent.
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    pub bias_constant: f64,
    pub variance_constant: f64,
    /// Largest relative level the deterministic methods may use.
    #[serde(default = "default_max_relative_level")]
    pub max_relative_level: u32,
}

fn default_max_relative_level() -> u32 {
    12
}

/// Rungs of the experiment. Budgets are abstract costs (strictly increasing);
/// tolerances are target root-MSEs (strictly decreasing).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Ladder {
    Budget { values: Vec<f64> },
    Tolerance { values: Vec<f64> },
}

impl Ladder {
    pub fn values(&self) -> &[f64] {
        match self {
            Ladder::Budget { values } | Ladder::Tolerance { values } => values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodConfig {
    /// Plain SMC at one level.
    SingleLevel { name: String },
    /// Deterministic MISMC (MLSMC when `D = 1`).
    Mismc {
        name: String,
        #[serde(default)]
        index_set: SetShape,
        #[serde(default = "default_n_floor")]
        n_floor: usize,
    },
    /// Randomized MISMC.
    Rmismc { name: String, n_min: usize },
}

fn default_n_floor() -> usize {
    crate::estimators::DEFAULT_N_FLOOR
}

impl MethodConfig {
    pub fn name(&self) -> &str {
        match self {
            MethodConfig::SingleLevel { name } | MethodConfig::Mismc { name, .. } | MethodConfig::Rmismc { name, .. } => {
                name
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetShape {
    #[default]
    TensorProduct,
    TotalDegree { weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Gauss–Legendre quadrature over the prior box at a fine level
    /// (uniform priors only).
    Quadrature {
        level: Vec<u32>,
        #[serde(default = "default_panels")]
        panels: usize,
        #[serde(default = "default_order")]
        order: usize,
    },
    /// Mean of single-level SMC runs at a fine level.
    Smc { level: Vec<u32>, particles: usize, seeds: usize },
    /// A known value.
    Value {
        value: f64,
        #[serde(default)]
        standard_error: f64,
    },
}

fn default_panels() -> usize {
    16
}

fn default_order() -> usize {
    8
}

/// Lower clamp for the normalizing-constant estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ZMin {
    /// A multiple of a pilot estimate of `Z`.
    Relative(f64),
    Absolute(f64),
}

impl Default for ZMin {
    fn default() -> Self {
        ZMin::Relative(1e-8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            plot: true,
        }
    }
}

/// Increment-rate audit run by the `rates` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub sweeps: Vec<Sweep>,
    pub method: IncrementMethod,
}

impl ExperimentConfig {
    /// Parse and validate a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; relative data paths resolve against its directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.model.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 2 {
            return Err(Error::config("realizations", "need at least 2 realizations per rung"));
        }
        if !(self.max_failure_fraction >= 0.0 && self.max_failure_fraction <= 1.0) {
            return Err(Error::config("max_failure_fraction", "must lie in [0, 1]"));
        }
        self.validate_model()?;
        self.smc.validate().map_err(|e| Error::config("smc", e.to_string()))?;
        self.validate_rates()?;
        self.validate_ladder()?;
        self.validate_methods()?;
        match self.z_min {
            ZMin::Relative(v) | ZMin::Absolute(v) if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::config("z_min", "must be positive"));
            }
            _ => {}
        }
        if let Some(r) = &self.reference {
            self.validate_reference(r)?;
        }
        if let Some(a) = &self.audit {
            if a.sweeps.is_empty() {
                return Err(Error::config("audit.sweeps", "need at least one sweep"));
            }
            for (i, s) in a.sweeps.iter().enumerate() {
                let (base, dir) = match s {
                    Sweep::Direction { base, direction, .. } => (base, Some(*direction)),
                    Sweep::Diagonal { base, .. } => (base, None),
                };
                if base.dim() != self.model.dim() || dir.is_some_and(|d| d >= base.dim()) {
                    return Err(Error::config(format!("audit.sweeps[{i}]"), "dimension mismatch"));
                }
            }
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<()> {
        match &self.model {
            ModelConfig::Toy { noise_sd, design, truth, .. } => {
                check_positive("model.noise_sd", *noise_sd)?;
                if let Some(d) = design {
                    if d.is_empty() || d.iter().any(|z| !(0.0..=1.0).contains(z)) {
                        return Err(Error::config("model.design", "points must lie in [0, 1]"));
                    }
                }
                if truth.is_some_and(|t| !(-1.0..=1.0).contains(&t)) {
                    return Err(Error::config("model.truth", "must lie in the prior support [-1, 1]"));
                }
            }
            ModelConfig::Pde2d { noise_sd, truth, .. } => {
                check_positive("model.noise_sd", *noise_sd)?;
                if truth.is_some_and(|t| t.iter().any(|v| !(-1.0..=1.0).contains(v))) {
                    return Err(Error::config("model.truth", "must lie in the prior support [-1, 1]²"));
                }
            }
            ModelConfig::Lgc(c) | ModelConfig::Lgp(c) => {
                if let Some(t) = c.theta {
                    if !(t[1] >= 0.0 && t[2] > 0.0) {
                        return Err(Error::config("model.theta", "need θ_2 ≥ 0 and θ_3 > 0"));
                    }
                }
                check_positive("model.smoothness", c.smoothness)?;
            }
        }
        Ok(())
    }

    fn validate_rates(&self) -> Result<()> {
        let d = self.model.dim();
        let r = &self.rates;
        for (field, v) in [("rates.s", &r.s), ("rates.beta", &r.beta)] {
            if v.len() != d {
                return Err(Error::config(field, format!("expected {d} entries, got {}", v.len())));
            }
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::config(field, "rates must be positive"));
            }
        }
        if let Some(g) = &r.gamma {
            if g.len() != d || g.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::config("rates.gamma", format!("expected {d} positive entries")));
            }
        }
        check_positive("rates.bias_constant", r.bias_constant)?;
        check_positive("rates.variance_constant", r.variance_constant)?;
        Ok(())
    }

    fn validate_ladder(&self) -> Result<()> {
        let (values, increasing, field) = match &self.ladder {
            Ladder::Budget { values } => (values, true, "ladder.values"),
            Ladder::Tolerance { values } => (values, false, "ladder.values"),
        };
        if values.len() < 2 {
            return Err(Error::config(field, "need at least two rungs"));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config(field, "rungs must be positive"));
        }
        let monotone = values.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
        if !monotone {
            let order = if increasing { "increasing" } else { "decreasing" };
            return Err(Error::config(field, format!("rungs must be strictly {order}")));
        }
        Ok(())
    }

    fn validate_methods(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("methods", "need at least one method"));
        }
        let mut names = HashSet::new();
        for (i, m) in self.methods.iter().enumerate() {
            if m.name().is_empty() || !names.insert(m.name()) {
                return Err(Error::config(
                    format!("methods[{i}].name"),
                    "method names must be non-empty and unique",
                ));
            }
            match m {
                MethodConfig::SingleLevel { .. } => {}
                MethodConfig::Mismc { index_set, n_floor, .. } => {
                    if *n_floor < 2 {
                        return Err(Error::config(format!("methods[{i}].n_floor"), "must be at least 2"));
                    }
                    if let SetShape::TotalDegree { weights } = index_set {
                        let field = format!("methods[{i}].index_set.weights");
                        if weights.len() != self.model.dim() {
                            return Err(Error::config(field, format!("expected {} weights", self.model.dim())));
                        }
                        if weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
                            return Err(Error::config(field, "every weight must lie in (0, 1]"));
                        }
                        let sum: f64 = weights.iter().sum();
                        if (sum - 1.0).abs() > 1e-9 {
                            return Err(Error::config(field, format!("weights must sum to 1, got {sum}")));
                        }
                    }
                }
                MethodConfig::Rmismc { n_min, .. } => {
                    if *n_min < 2 {
                        return Err(Error::config(format!("methods[{i}].n_min"), "must be at least 2"));
                    }
                    let gamma = self.rates.gamma.clone().unwrap_or_else(|| vec![1.0; self.model.dim()]);
                    for (j, (b, g)) in self.rates.beta.iter().zip(&gamma).enumerate() {
                        if b <= g {
                            return Err(Error::config(
                                format!("rates.beta[{j}]"),
                                format!("randomized methods need beta ({b}) > gamma ({g})"),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_reference(&self, r: &ReferenceConfig) -> Result<()> {
        let d = self.model.dim();
        match r {
            ReferenceConfig::Quadrature { level, panels, order } => {
                if level.len() != d {
                    return Err(Error::config("reference.level", format!("expected {d} entries")));
                }
                if matches!(self.model, ModelConfig::Lgc(_) | ModelConfig::Lgp(_)) {
                    return Err(Error::config(
                        "reference.kind",
                        "quadrature needs a finite-dimensional uniform prior",
                    ));
                }
                if *panels == 0 || *order == 0 {
                    return Err(Error::config("reference.order", "panels and order must be positive"));
                }
            }
            ReferenceConfig::Smc { level, particles, seeds } => {
                if level.len() != d {
                    return Err(Error::config("reference.level", format!("expected {d} entries")));
                }
                if *particles < 2 || *seeds < 2 {
                    return Err(Error::config("reference.seeds", "need at least 2 particles and 2 seeds"));
                }
            }
            ReferenceConfig::Value { value, standard_error } => {
                if !value.is_finite() || !(*standard_error >= 0.0) {
                    return Err(Error::config("reference.value", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be positive"))
    }
}
