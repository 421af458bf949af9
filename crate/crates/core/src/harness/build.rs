use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::models::elliptic::{EllipticModel, OBSERVATION_POINTS};
use crate::models::point_process::{read_points, write_points, PointProcessModel, SyntheticPattern};
use crate::models::spectral::SpectralGaussianPrior;
use crate::models::toy::{default_design, synthesize_toy_data, ToyModel};
use crate::models::Model;
use crate::multiindex::MultiIndex;
use crate::seed::{Purpose, SeedPath};

/// Where the observations came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataProvenance {
    /// `"synthetic"` or the path of the data file.
    pub source: String,
    /// Number of observations or points.
    pub count: usize,
    /// The parameter used to generate synthetic data, if any.
    pub truth: Option<Vec<f64>>,
}

/// Observations in the form written by `simulate-data`.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSet {
    /// Toy: `(z, y)` pairs.
    Toy(Vec<(f64, f64)>),
    /// 2D PDE: `(z1, z2, y)` triples.
    Pde2d(Vec<(f64, f64, f64)>),
    Points(Vec<(f64, f64)>),
}

impl DataSet {
    pub fn len(&self) -> usize {
        match self {
            DataSet::Toy(v) | DataSet::Points(v) => v.len(),
            DataSet::Pde2d(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        match self {
            DataSet::Points(p) => write_points(path, p),
            DataSet::Toy(rows) => {
                let mut w = csv::Writer::from_path(path)?;
                for &(z, y) in rows {
                    w.serialize(ToyRow { z, y })?;
                }
                w.flush()?;
                Ok(())
            }
            DataSet::Pde2d(rows) => {
                let mut w = csv::Writer::from_path(path)?;
                for &(z1, z2, y) in rows {
                    w.serialize(PdeRow { z1, z2, y })?;
                }
                w.flush()?;
                Ok(())
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ToyRow {
    z: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct PdeRow {
    z1: f64,
    z2: f64,
    y: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Load or synthesize the observations for `cfg`.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(DataSet, DataProvenance)> {
    let mut rng = SeedPath::new(cfg.model.data_seed().unwrap_or(cfg.seed))
        .purpose(Purpose::Data)
        .rng();
    match &cfg.model {
        ModelConfig::Toy { noise_sd, design, truth, data_file, .. } => {
            if let Some(path) = data_file {
                let rows: Vec<ToyRow> = read_rows(path)?;
                let data: Vec<(f64, f64)> = rows.into_iter().map(|r| (r.z, r.y)).collect();
                return Ok(file_provenance(DataSet::Toy(data), path));
            }
            let x = truth.unwrap_or_else(|| rng.random_range(-1.0..1.0));
            let design = design.clone().unwrap_or_else(default_design);
            let y = synthesize_toy_data(&design, x, *noise_sd, &mut rng);
            let n = y.len();
            Ok((
                DataSet::Toy(design.into_iter().zip(y).collect()),
                synthetic(n, vec![x]),
            ))
        }
        ModelConfig::Pde2d { noise_sd, truth, data_level, data_file, .. } => {
            if let Some(path) = data_file {
                let rows: Vec<PdeRow> = read_rows(path)?;
                if rows.len() != OBSERVATION_POINTS.len()
                    || rows
                        .iter()
                        .zip(OBSERVATION_POINTS)
                        .any(|(r, (a, b))| (r.z1 - a).abs() > 1e-9 || (r.z2 - b).abs() > 1e-9)
                {
                    return Err(Error::Data(format!(
                        "{}: expected rows at the observation points {OBSERVATION_POINTS:?}",
                        path.display()
                    )));
                }
                let data = rows.into_iter().map(|r| (r.z1, r.z2, r.y)).collect();
                return Ok(file_provenance(DataSet::Pde2d(data), path));
            }
            let x = truth.unwrap_or_else(|| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let m = EllipticModel::synthetic(x, (data_level[0], data_level[1]), *noise_sd, &mut rng)?;
            let data = OBSERVATION_POINTS
                .iter()
                .zip(m.data())
                .map(|(&(a, b), &y)| (a, b, y))
                .collect();
            Ok((DataSet::Pde2d(data), synthetic(4, x.to_vec())))
        }
        ModelConfig::Lgc(c) | ModelConfig::Lgp(c) => {
            if let Some(path) = &c.points_file {
                let points = read_points(path)?;
                return Ok(file_provenance(DataSet::Points(points), path));
            }
            let (kind, _) = cfg.model.point_process().expect("point-process model");
            let points = SyntheticPattern::default_for(kind).simulate(&mut rng)?;
            let n = points.len();
            Ok((DataSet::Points(points), synthetic(n, Vec::new())))
        }
    }
}

fn synthetic(count: usize, truth: Vec<f64>) -> DataProvenance {
    DataProvenance {
        source: "synthetic".into(),
        count,
        truth: (!truth.is_empty()).then_some(truth),
    }
}

fn file_provenance(data: DataSet, path: &Path) -> (DataSet, DataProvenance) {
    let p = DataProvenance {
        source: path.display().to_string(),
        count: data.len(),
        truth: None,
    };
    (data, p)
}

/// Construct the forward model of `cfg` together with its data provenance.
pub fn build_model(cfg: &ExperimentConfig) -> Result<(Box<dyn Model>, DataProvenance)> {
    let (data, provenance) = load_data(cfg)?;
    let model: Box<dyn Model> = match (&cfg.model, data) {
        (ModelConfig::Toy { noise_sd, .. }, DataSet::Toy(rows)) => {
            let (design, y): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
            Box::new(ToyModel::new(design, y, *noise_sd)?)
        }
        (ModelConfig::Pde2d { noise_sd, .. }, DataSet::Pde2d(rows)) => {
            Box::new(EllipticModel::new(rows.into_iter().map(|r| r.2).collect(), *noise_sd)?)
        }
        (ModelConfig::Lgc(c) | ModelConfig::Lgp(c), DataSet::Points(points)) => {
            let (kind, _) = cfg.model.point_process().expect("point-process model");
            let prior = SpectralGaussianPrior::new(
                c.theta.unwrap_or_else(|| kind.default_theta()),
                c.smoothness,
                c.truncation,
            )?;
            Box::new(PointProcessModel::new(kind, prior, points, MultiIndex::from(c.start))?)
        }
        _ => unreachable!("load_data returns the data kind of its model"),
    };
    Ok((model, provenance))
}
