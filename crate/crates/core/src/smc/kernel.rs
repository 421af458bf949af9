//! Prior-reversible Metropolis proposals. With these, the acceptance ratio at
//! temperature `τ` reduces to `exp(τ (log L(x') − log L(x)))`.

use rand::Rng;

use super::standard_normals;
use crate::models::Prior;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proposal {
    /// Gaussian random walk folded back into the box (symmetric).
    ReflectedRandomWalk,
    /// Preconditioned Crank–Nicolson (reversible for the standard normal).
    CrankNicolson,
}

impl Proposal {
    pub fn for_prior(prior: Prior) -> Self {
        match prior {
            Prior::UniformBox { .. } => Proposal::ReflectedRandomWalk,
            Prior::StandardGaussian => Proposal::CrankNicolson,
        }
    }
}

/// Fold `y` into `[lo, hi]` by repeated reflection at the walls.
pub fn reflect(y: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&y) {
        return y;
    }
    let w = hi - lo;
    let t = (y - lo).rem_euclid(2.0 * w);
    lo + if t > w { 2.0 * w - t } else { t }
}

/// Proposal from `x`. `scale` is the per-coordinate random-walk standard
/// deviation; for the Gaussian prior its first entry is the pCN `ρ`.
pub fn propose<R: Rng + ?Sized>(prior: Prior, x: &[f64], scale: &[f64], rng: &mut R) -> Vec<f64> {
    let z = standard_normals(x.len(), rng);
    match prior {
        Prior::UniformBox { lo, hi } => x
            .iter()
            .zip(&z)
            .zip(scale)
            .map(|((xi, zi), s)| reflect(xi + s * zi, lo, hi))
            .collect(),
        Prior::StandardGaussian => {
            let rho = scale.first().copied().unwrap_or(0.0).min(1.0);
            let c = (1.0 - rho * rho).sqrt();
            x.iter().zip(&z).map(|(xi, zi)| c * xi + rho * zi).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn reflection_stays_in_box(y in -50.0f64..50.0) {
            let r = reflect(y, -1.0, 1.0);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn reflection_is_identity_inside() {
        assert_eq!(reflect(0.3, -1.0, 1.0), 0.3);
        assert!((reflect(1.2, -1.0, 1.0) - 0.8).abs() < 1e-15);
        assert!((reflect(-1.5, -1.0, 1.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernels_preserve_the_prior() {
        // Always-accept chains started from the prior stay at the prior.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let uni = Prior::UniformBox { lo: -1.0, hi: 1.0 };
        let mut m2 = 0.0;
        for _ in 0..n {
            let mut x = uni.sample(1, &mut rng);
            for _ in 0..5 {
                x = propose(uni, &x, &[0.7], &mut rng);
            }
            m2 += x[0] * x[0];
        }
        // E x² = 1/3, sd of x² is 0.298
        assert!((m2 / n as f64 - 1.0 / 3.0).abs() < 4.0 * 0.298 / (n as f64).sqrt());

        let mut m2 = 0.0;
        for _ in 0..n {
            let mut x = Prior::StandardGaussian.sample(1, &mut rng);
            for _ in 0..5 {
                x = propose(Prior::StandardGaussian, &x, &[0.5], &mut rng);
            }
            m2 += x[0] * x[0];
        }
        assert!((m2 / n as f64 - 1.0).abs() < 4.0 * 2f64.sqrt() / (n as f64).sqrt());
    }
}
