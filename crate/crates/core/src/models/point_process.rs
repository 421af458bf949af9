//! Log-Gaussian Cox process (LGC) and log-Gaussian process density (LGP)
//! models for point patterns in `[0,1]²`.
//!
//! With `x̂_α` the bilinear interpolant of the FFT grid and `Q` the trapezoid
//! rule on the grid nodes in `[0,1]²`:
//!
//! ```text
//! LGC:  log L_α = Σ_i x̂_α(z_i) − Q(exp x_α)
//! LGP:  log L_α = Σ_i x̂_α(z_i) − n log Q(exp x_α)
//! ```
//!
//! The quantity of interest is `Q(exp x_α) ≈ ∫_{[0,1]²} exp(x(z)) dz`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spectral::{FftCache, FieldGrid, SpectralGaussianPrior, Truncation};
use super::{Evaluation, Model, Prior};
use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointProcessKind {
    Lgc,
    Lgp,
}

impl PointProcessKind {
    /// Default `(θ_1, θ_2, θ_3)`.
    pub fn default_theta(self) -> [f64; 3] {
        use std::f64::consts::PI;
        match self {
            PointProcessKind::Lgc => [0.0, 1.0, (33.0 / PI).powi(2)],
            PointProcessKind::Lgp => [0.0, 1.0, (33.0 / (2.0 * PI)).powi(2)],
        }
    }
}

pub const DEFAULT_SMOOTHNESS: f64 = 2.0;
pub const DEFAULT_START: [u32; 2] = [5, 5];

#[derive(Debug)]
pub struct PointProcessModel {
    kind: PointProcessKind,
    prior: SpectralGaussianPrior,
    points: Vec<(f64, f64)>,
    start: MultiIndex,
    fft: FftCache,
    gamma: [f64; 2],
}

impl PointProcessModel {
    pub fn new(
        kind: PointProcessKind,
        prior: SpectralGaussianPrior,
        points: Vec<(f64, f64)>,
        start: MultiIndex,
    ) -> Result<Self> {
        check_points(&points)?;
        if start.dim() != 2 {
            return Err(Error::invalid("point-process models have two directions"));
        }
        Ok(PointProcessModel {
            kind,
            prior,
            points,
            start,
            fft: FftCache::default(),
            gamma: [1.0, 1.0],
        })
    }

    pub fn kind(&self) -> PointProcessKind {
        self.kind
    }

    pub fn spectral_prior(&self) -> &SpectralGaussianPrior {
        &self.prior
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn field(&self, level: &MultiIndex, finest: &MultiIndex, state: &[f64]) -> Result<FieldGrid> {
        self.prior.field(&self.fft, level, finest, state)
    }

    /// Log-likelihood and quantity of interest for a given grid field.
    pub fn evaluate_field(&self, grid: &FieldGrid) -> Evaluation {
        let sum: f64 = self.points.iter().map(|&(a, b)| grid.interpolate(a, b)).sum();
        let q = grid.trapezoid(f64::exp);
        let log_likelihood = match self.kind {
            PointProcessKind::Lgc => sum - q,
            PointProcessKind::Lgp => sum - self.points.len() as f64 * q.ln(),
        };
        Evaluation {
            log_likelihood,
            qoi: q,
        }
    }
}

impl Model for PointProcessModel {
    fn name(&self) -> &str {
        match self.kind {
            PointProcessKind::Lgc => "lgc",
            PointProcessKind::Lgp => "lgp",
        }
    }

    fn dim(&self) -> usize {
        2
    }

    fn start_level(&self) -> MultiIndex {
        self.start.clone()
    }

    fn cost_rates(&self) -> &[f64] {
        &self.gamma
    }

    fn max_level(&self) -> Option<u32> {
        Some(12)
    }

    fn prior(&self) -> Prior {
        Prior::StandardGaussian
    }

    fn state_len(&self, finest: &MultiIndex) -> usize {
        self.prior.state_len(finest)
    }

    fn evaluate(&self, level: &MultiIndex, finest: &MultiIndex, state: &[f64]) -> Result<Evaluation> {
        let grid = self.field(level, finest, state).map_err(|e| e.at_index(level))?;
        Ok(self.evaluate_field(&grid))
    }
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    for (i, &(a, b)) in points.iter().enumerate() {
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
            return Err(Error::Data(format!("point {i} = ({a}, {b}) lies outside [0,1]²")));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct PointRow {
    z1: f64,
    z2: f64,
}

/// Read a point pattern from a CSV file with header `z1,z2`.
pub fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: PointRow = row?;
        out.push((row.z1, row.z2));
    }
    check_points(&out)?;
    Ok(out)
}

pub fn write_points(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for &(z1, z2) in points {
        w.serialize(PointRow { z1, z2 })?;
    }
    w.flush()?;
    Ok(())
}

/// Inhomogeneous Poisson process on `[0,1]²` by thinning, with intensity
/// `exp(log_intensity(z))` bounded by `exp(log_bound)`.
pub fn thin_poisson<R: Rng + ?Sized>(
    log_intensity: impl Fn(f64, f64) -> f64,
    log_bound: f64,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let bound = log_bound.exp();
    let count = if bound > 0.0 {
        Poisson::new(bound)
            .map_err(|e| Error::invalid(format!("intensity bound {bound}: {e}")))?
            .sample(rng) as usize
    } else {
        0
    };
    let mut out = Vec::new();
    for _ in 0..count {
        let z = (rng.random::<f64>(), rng.random::<f64>());
        if rng.random::<f64>().ln() < log_intensity(z.0, z.1) - log_bound {
            out.push(z);
        }
    }
    Ok(out)
}

/// `n` i.i.d. draws from the density proportional to `exp(log_density)` on
/// `[0,1]²` by rejection against the uniform.
pub fn sample_density<R: Rng + ?Sized>(
    log_density: impl Fn(f64, f64) -> f64,
    log_bound: f64,
    n: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z = (rng.random::<f64>(), rng.random::<f64>());
        if rng.random::<f64>().ln() < log_density(z.0, z.1) - log_bound {
            out.push(z);
        }
    }
    out
}

/// Settings for a synthetic point pattern: a prior draw of the field at
/// `level`, then thinning (LGC) or `n` density draws (LGP).
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPattern {
    pub kind: PointProcessKind,
    pub prior: SpectralGaussianPrior,
    pub level: MultiIndex,
    /// Number of points for LGP.
    pub n: usize,
}

impl SyntheticPattern {
    /// Truth field with mean intensity about 126 points over the unit square.
    pub fn default_for(kind: PointProcessKind) -> Self {
        let mut theta = kind.default_theta();
        theta[0] = 126f64.ln();
        SyntheticPattern {
            kind,
            prior: SpectralGaussianPrior::new(theta, DEFAULT_SMOOTHNESS, Truncation::Full)
                .expect("default prior is valid"),
            level: MultiIndex::from([6, 6]),
            n: 126,
        }
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<(f64, f64)>> {
        let state: Vec<f64> = (0..self.prior.state_len(&self.level))
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let grid = self.prior.field(&FftCache::default(), &self.level, &self.level, &state)?;
        let bound = grid.max_on_unit_square();
        let f = |a: f64, b: f64| grid.interpolate(a, b);
        match self.kind {
            PointProcessKind::Lgc => thin_poisson(f, bound, rng),
            PointProcessKind::Lgp => Ok(sample_density(f, bound, self.n, rng)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(kind: PointProcessKind, points: Vec<(f64, f64)>) -> PointProcessModel {
        let prior = SpectralGaussianPrior::new(kind.default_theta(), 3.0, Truncation::Full).unwrap();
        PointProcessModel::new(kind, prior, points, MultiIndex::from([1, 1])).unwrap()
    }

    fn pts() -> Vec<(f64, f64)> {
        vec![(0.1, 0.2), (0.5, 0.5), (0.9, 0.3), (0.33, 0.77)]
    }

    #[test]
    fn zero_field_likelihoods() {
        let g = FieldGrid::constant(16, 16, 0.0);
        let lgc = model(PointProcessKind::Lgc, pts()).evaluate_field(&g);
        assert!((lgc.log_likelihood + 1.0).abs() < 1e-14);
        assert!((lgc.qoi - 1.0).abs() < 1e-14);
        let lgp = model(PointProcessKind::Lgp, pts()).evaluate_field(&g);
        assert!(lgp.log_likelihood.abs() < 1e-14);
    }

    #[test]
    fn lgp_is_invariant_to_constant_shifts() {
        let m = model(PointProcessKind::Lgp, pts());
        let a = MultiIndex::from([3, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..m.state_len(&a)).map(|_| rng.sample(StandardNormal)).collect();
        let g = m.field(&a, &a, &s).unwrap();
        let base = m.evaluate_field(&g).log_likelihood;
        for c in [-2.0, 0.7, 3.0] {
            let mut h = g.clone();
            h.values.iter_mut().for_each(|v| *v += c);
            assert!((m.evaluate_field(&h).log_likelihood - base).abs() < 1e-12);
        }
        let c = FieldGrid::constant(8, 8, 1.3);
        assert!(m.evaluate_field(&c).log_likelihood.abs() < 1e-12);
    }

    #[test]
    fn rejects_points_outside_unit_square() {
        let prior = SpectralGaussianPrior::new([0.0, 1.0, 1.0], 3.0, Truncation::Full).unwrap();
        let r = PointProcessModel::new(PointProcessKind::Lgc, prior, vec![(1.2, 0.5)], MultiIndex::from([5, 5]));
        assert!(matches!(r, Err(Error::Data(_))));
    }

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn flat_density_samples_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 2000;
        let p = sample_density(|_, _| 0.0, 0.0, n, &mut rng);
        let crit = 1.628 / (n as f64).sqrt();
        assert!(ks_uniform(p.iter().map(|z| z.0).collect()) < crit);
        assert!(ks_uniform(p.iter().map(|z| z.1).collect()) < crit);
    }

    #[test]
    fn thinning_count_matches_integrated_intensity() {
        // intensity 200 * (z1 + z2) integrates to 200
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let reps = 200;
        let total: usize = (0..reps)
            .map(|_| {
                thin_poisson(|a, b| (200.0 * (a + b)).ln(), 400f64.ln(), &mut rng)
                    .unwrap()
                    .len()
            })
            .sum();
        let mean = total as f64 / reps as f64;
        // Poisson(200): sd of the mean is 1
        assert!((mean - 200.0).abs() < 4.0, "{mean}");
    }

    #[test]
    fn synthetic_lgc_pattern_has_about_126_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pat = SyntheticPattern::default_for(PointProcessKind::Lgc).simulate(&mut rng).unwrap();
        assert!((80..180).contains(&pat.len()), "{}", pat.len());
        check_points(&pat).unwrap();
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        write_points(&path, &pts()).unwrap();
        assert_eq!(read_points(&path).unwrap(), pts());
        std::fs::write(&path, "z1,z2\n0.5,1.5\n").unwrap();
        assert!(read_points(&path).is_err());
    }
}
