//! Truncated spectral (Karhunen–Loève) Gaussian random fields on the periodic
//! domain `[0,2]²`, synthesized on a grid by inverse FFT.
//!
//! ```text
//! x_α(z) = θ_1 + Σ_{k ∈ A_α} ζ_k (ξ_k φ_k(z) + ξ_k* φ_{-k}(z)),   φ_k(z) = exp(πi z·k)
//! ζ_k² = θ_2 / ((θ_3 + k_1²)(θ_3 + k_2²))^{(β+1)/2}
//! ```
//!
//! `A_α` is the half plane `{k_2 = 0, 1 ≤ k_1 ≤ K_1} ∪ {1 ≤ k_2 ≤ K_2, |k_1| ≤ K_1}`
//! with `K_i = 2^{α_i}` ([`Truncation::Full`]) or `⌊2^{α_i/2}⌋`
//! ([`Truncation::Half`]).
//!
//! The latent state holds the real and imaginary parts of `√2 ξ_k` as i.i.d.
//! standard normals, laid out for the finest index of a run. Coarser levels
//! read the leading modes of the same vector, so the prior coupling across a
//! mixed difference is exact.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// `|k_i| ≤ 2^{α_i}`.
    #[default]
    Full,
    /// `|k_i| ≤ ⌊2^{α_i/2}⌋`.
    Half,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGaussianPrior {
    pub theta: [f64; 3],
    pub smoothness: f64,
    pub truncation: Truncation,
}

impl SpectralGaussianPrior {
    pub fn new(theta: [f64; 3], smoothness: f64, truncation: Truncation) -> Result<Self> {
        if !(theta[1] >= 0.0) || !(theta[2] > 0.0) || !theta[0].is_finite() {
            return Err(Error::invalid("need finite θ_1, θ_2 ≥ 0 and θ_3 > 0"));
        }
        if !(smoothness > 0.0) {
            return Err(Error::invalid("smoothness must be positive"));
        }
        Ok(SpectralGaussianPrior {
            theta,
            smoothness,
            truncation,
        })
    }

    /// Coefficient variance `ζ_k²`.
    pub fn zeta_sq(&self, k1: i64, k2: i64) -> f64 {
        let [_, t2, t3] = self.theta;
        let (a, b) = ((k1 * k1) as f64, (k2 * k2) as f64);
        t2 / ((t3 + a) * (t3 + b)).powf(0.5 * (self.smoothness + 1.0))
    }

    pub fn max_mode(&self, level: u32) -> usize {
        match self.truncation {
            Truncation::Full => 1usize << level,
            Truncation::Half => (0.5 * level as f64).exp2().floor() as usize,
        }
    }

    fn bounds(&self, alpha: &MultiIndex) -> (usize, usize) {
        (self.max_mode(alpha.get(0)), self.max_mode(alpha.get(1)))
    }

    /// Number of complex coefficients `|A_α|`.
    pub fn coefficient_count(&self, alpha: &MultiIndex) -> usize {
        let (k1, k2) = self.bounds(alpha);
        k1 + k2 * (2 * k1 + 1)
    }

    pub fn state_len(&self, finest: &MultiIndex) -> usize {
        2 * self.coefficient_count(finest)
    }

    /// Modes of `A_α` in state order.
    pub fn modes(&self, alpha: &MultiIndex) -> Vec<(i64, i64)> {
        let (k1, k2) = self.bounds(alpha);
        let (k1, k2) = (k1 as i64, k2 as i64);
        let mut out: Vec<(i64, i64)> = (1..=k1).map(|a| (a, 0)).collect();
        for b in 1..=k2 {
            out.extend((-k1..=k1).map(|a| (a, b)));
        }
        out
    }

    /// Position of mode `k` in a state laid out for `finest`.
    fn slot(k: (i64, i64), bounds: (usize, usize)) -> usize {
        let k1max = bounds.0 as i64;
        if k.1 == 0 {
            (k.0 - 1) as usize
        } else {
            (k1max + (k.1 - 1) * (2 * k1max + 1) + k.0 + k1max) as usize
        }
    }

    /// `Σ_{k ∈ A_α} 2 ζ_k²`, the variance of `x_α(z)` at any point.
    pub fn pointwise_variance(&self, alpha: &MultiIndex) -> f64 {
        self.modes(alpha).iter().map(|&(a, b)| 2.0 * self.zeta_sq(a, b)).sum()
    }

    /// Grid points per direction on `[0,2)`, spacing `2^{-α_i}`.
    pub fn grid_shape(alpha: &MultiIndex) -> (usize, usize) {
        (2usize << alpha.get(0), 2usize << alpha.get(1))
    }

    /// Grid values of `x_α` from a state laid out for `finest`.
    pub fn field(&self, fft: &FftCache, level: &MultiIndex, finest: &MultiIndex, state: &[f64]) -> Result<FieldGrid> {
        let (m1, m2) = Self::grid_shape(level);
        let fb = self.bounds(finest);
        if state.len() != 2 * (fb.0 + fb.1 * (2 * fb.0 + 1)) {
            return Err(Error::invalid(format!(
                "state length {} does not match layout for {finest}",
                state.len()
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); m1 * m2];
        let bin = |k: i64, m: usize| k.rem_euclid(m as i64) as usize;
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        for k in self.modes(level) {
            let s = Self::slot(k, fb);
            let xi = Complex64::new(state[2 * s], state[2 * s + 1]) * scale;
            let c = xi * self.zeta_sq(k.0, k.1).sqrt();
            // += so that Nyquist modes sharing a bin with their conjugate add up
            buf[bin(k.0, m1) + m1 * bin(k.1, m2)] += c;
            buf[bin(-k.0, m1) + m1 * bin(-k.1, m2)] += c.conj();
        }
        fft.inverse(m1).process(&mut buf);
        let mut t = vec![Complex64::new(0.0, 0.0); m1 * m2];
        for j in 0..m2 {
            for i in 0..m1 {
                t[j + m2 * i] = buf[i + m1 * j];
            }
        }
        fft.inverse(m2).process(&mut t);
        let mut values = vec![0.0; m1 * m2];
        let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
        for i in 0..m1 {
            for j in 0..m2 {
                let v = t[j + m2 * i];
                max_re = max_re.max(v.re.abs());
                max_im = max_im.max(v.im.abs());
                values[i + m1 * j] = self.theta[0] + v.re;
            }
        }
        if max_im > 1e-10 * max_re.max(1.0) {
            return Err(Error::Solver(format!("spectral field has imaginary residue {max_im:e}")));
        }
        Ok(FieldGrid { m1, m2, values })
    }
}

/// Inverse FFT plans shared across threads.
#[derive(Default)]
pub struct FftCache {
    plans: RwLock<HashMap<usize, Arc<dyn Fft<f64>>>>,
}

impl std::fmt::Debug for FftCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sizes: Vec<usize> = self.plans.read().expect("plan lock").keys().copied().collect();
        f.debug_struct("FftCache").field("sizes", &sizes).finish()
    }
}

impl FftCache {
    pub fn inverse(&self, len: usize) -> Arc<dyn Fft<f64>> {
        if let Some(p) = self.plans.read().expect("plan lock").get(&len) {
            return p.clone();
        }
        let plan = FftPlanner::new().plan_fft_inverse(len);
        self.plans.write().expect("plan lock").entry(len).or_insert(plan).clone()
    }
}

/// Field values on the periodic grid over `[0,2)²`, `z_1` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub m1: usize,
    pub m2: usize,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn constant(m1: usize, m2: usize, c: f64) -> Self {
        FieldGrid {
            m1,
            m2,
            values: vec![c; m1 * m2],
        }
    }

    pub fn spacing(&self) -> (f64, f64) {
        (2.0 / self.m1 as f64, 2.0 / self.m2 as f64)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[(i % self.m1) + self.m1 * (j % self.m2)]
    }

    /// Bilinear interpolant `x̂(z)` for `z ∈ [0,1]²`.
    pub fn interpolate(&self, z1: f64, z2: f64) -> f64 {
        let (h1, h2) = self.spacing();
        let (s1, s2) = (z1 / h1, z2 / h2);
        let (i, j) = (s1.floor().max(0.0) as usize, s2.floor().max(0.0) as usize);
        let (t1, t2) = (s1 - i as f64, s2 - j as f64);
        (1.0 - t1) * (1.0 - t2) * self.at(i, j)
            + t1 * (1.0 - t2) * self.at(i + 1, j)
            + (1.0 - t1) * t2 * self.at(i, j + 1)
            + t1 * t2 * self.at(i + 1, j + 1)
    }

    /// Trapezoid rule for `∫_{[0,1]²} g(x(z)) dz` on the grid nodes in `[0,1]²`.
    pub fn trapezoid(&self, g: impl Fn(f64) -> f64) -> f64 {
        let (n1, n2) = (self.m1 / 2, self.m2 / 2);
        let (h1, h2) = self.spacing();
        let mut acc = 0.0;
        for j in 0..=n2 {
            let wj = if j == 0 || j == n2 { 0.5 } else { 1.0 };
            let mut row = 0.0;
            for i in 0..=n1 {
                let wi = if i == 0 || i == n1 { 0.5 } else { 1.0 };
                row += wi * g(self.values[i + self.m1 * j]);
            }
            acc += wj * row;
        }
        acc * h1 * h2
    }

    /// Largest grid value over `[0,1]²`; bounds the bilinear interpolant there.
    pub fn max_on_unit_square(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for j in 0..=self.m2 / 2 {
            for i in 0..=self.m1 / 2 {
                m = m.max(self.values[i + self.m1 * j]);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn prior(trunc: Truncation) -> SpectralGaussianPrior {
        SpectralGaussianPrior::new([0.0, 1.0, 1.0], 3.0, trunc).unwrap()
    }

    #[test]
    fn zeta_at_unit_mode() {
        assert!((prior(Truncation::Full).zeta_sq(1, 1) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn mode_counts() {
        let p = prior(Truncation::Full);
        let a = MultiIndex::from([1, 2]);
        // K = (2, 4): 2 + 4 * 5
        assert_eq!(p.coefficient_count(&a), 22);
        assert_eq!(p.modes(&a).len(), 22);
        let h = prior(Truncation::Half);
        assert_eq!(h.max_mode(5), 5);
        assert_eq!(h.max_mode(6), 8);
    }

    #[test]
    fn coarse_modes_keep_their_slots() {
        let p = prior(Truncation::Full);
        let fine = MultiIndex::from([3, 2]);
        let fb = p.bounds(&fine);
        let all: Vec<usize> = p.modes(&fine).iter().map(|&k| SpectralGaussianPrior::slot(k, fb)).collect();
        assert_eq!(all, (0..all.len()).collect::<Vec<_>>());
    }

    #[test]
    fn field_matches_direct_series() {
        let p = SpectralGaussianPrior::new([0.3, 2.0, 0.5], 2.0, Truncation::Full).unwrap();
        let fft = FftCache::default();
        let fine = MultiIndex::from([3, 3]);
        let level = MultiIndex::from([2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let state: Vec<f64> = (0..p.state_len(&fine)).map(|_| rng.sample(StandardNormal)).collect();
        let grid = p.field(&fft, &level, &fine, &state).unwrap();
        let fb = p.bounds(&fine);
        let (h1, h2) = grid.spacing();
        for j in 0..grid.m2 {
            for i in 0..grid.m1 {
                let z = (i as f64 * h1, j as f64 * h2);
                let mut x = p.theta[0];
                for k in p.modes(&level) {
                    let s = SpectralGaussianPrior::slot(k, fb);
                    let xi = Complex64::new(state[2 * s], state[2 * s + 1]) / 2f64.sqrt();
                    let phase = Complex64::from_polar(1.0, PI * (z.0 * k.0 as f64 + z.1 * k.1 as f64));
                    x += 2.0 * p.zeta_sq(k.0, k.1).sqrt() * (xi * phase).re;
                }
                assert!((grid.at(i, j) - x).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn pointwise_variance_matches_series() {
        let p = prior(Truncation::Full);
        let fft = FftCache::default();
        let a = MultiIndex::from([2, 2]);
        let target = p.pointwise_variance(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let (z1, z2) = (0.25, 0.75);
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let s: Vec<f64> = (0..p.state_len(&a)).map(|_| rng.sample(StandardNormal)).collect();
            samples.push(p.field(&fft, &a, &a, &s).unwrap().interpolate(z1, z2));
        }
        let var = samples.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let m4 = samples.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        let se = ((m4 - var * var) / n as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "{var} vs {target} (se {se})");
    }

    #[test]
    fn zero_state_gives_constant_field() {
        let p = SpectralGaussianPrior::new([1.5, 1.0, 1.0], 3.0, Truncation::Full).unwrap();
        let a = MultiIndex::from([1, 1]);
        let g = p.field(&FftCache::default(), &a, &a, &vec![0.0; p.state_len(&a)]).unwrap();
        assert!(g.values.iter().all(|&v| v == 1.5));
        assert!((g.trapezoid(f64::exp) - 1.5f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_of_one_is_one() {
        for (m1, m2) in [(2, 2), (4, 8), (64, 32)] {
            let g = FieldGrid::constant(m1, m2, 0.0);
            assert!((g.trapezoid(f64::exp) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_bilinear_functions() {
        let (m1, m2) = (8, 16);
        let (h1, h2) = (2.0 / m1 as f64, 2.0 / m2 as f64);
        let mut g = FieldGrid::constant(m1, m2, 0.0);
        for j in 0..m2 {
            for i in 0..m1 {
                let (z1, z2) = (i as f64 * h1, j as f64 * h2);
                g.values[i + m1 * j] = 1.0 + 2.0 * z1 - z2 + 0.5 * z1 * z2;
            }
        }
        for &(z1, z2) in &[(0.1, 0.2), (0.33, 0.9), (1.0, 1.0), (0.0, 0.5)] {
            let exact = 1.0 + 2.0 * z1 - z2 + 0.5 * z1 * z2;
            assert!((g.interpolate(z1, z2) - exact).abs() < 1e-12);
        }
    }
}
