use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    #[default]
    Systematic,
    Multinomial,
}

/// Ancestor indices for normalized `weights`.
pub fn resample<R: Rng + ?Sized>(scheme: Resampling, weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    match scheme {
        Resampling::Systematic => {
            let u0: f64 = rng.random();
            let mut cum = weights[0];
            let mut j = 0;
            for i in 0..n {
                let u = (i as f64 + u0) / n as f64;
                while u > cum && j + 1 < n {
                    j += 1;
                    cum += weights[j];
                }
                out.push(j);
            }
        }
        Resampling::Multinomial => {
            let mut cdf = Vec::with_capacity(n);
            let mut acc = 0.0;
            for w in weights {
                acc += w;
                cdf.push(acc);
            }
            for _ in 0..n {
                let u = rng.random::<f64>() * acc;
                let j = cdf.partition_point(|&c| c < u).min(n - 1);
                out.push(j);
            }
        }
    }
    out
}

/// Normalize log-weights in place to probabilities, returning `log Σ exp(lw)`.
pub fn normalize_log_weights(lw: &[f64]) -> (Vec<f64>, f64) {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return (vec![f64::NAN; lw.len()], m);
    }
    let w: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    (w.iter().map(|x| x / s).collect(), m + s.ln())
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}
