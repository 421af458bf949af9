//! Acceptance suite. Runs every criterion at full tolerance, prints one
//! `PASS`/`FAIL` line per criterion and exits non-zero if any failed.
//!
//! Expected values come from oracles written here: closed-form nodal FEM
//! gains plus Simpson's rule for the toy integrals, the manufactured PDE
//! solution, and the multinomial moment formulas.
//!
//! The slow criteria (4 and 6) run the shipped configs end to end; on one
//! core the whole suite takes about 40 minutes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmismc::estimators::rmismc_estimate;
use rmismc::harness::{build_model, run_experiment, ExperimentConfig, Ladder};
use rmismc::models::fem::fem_solve_2d;
use rmismc::models::toy::ToyModel;
use rmismc::multiindex::{
    enumerate_index_set, sample_allocation, subindex_expansion_from, AllocationDistribution, IndexSet,
};
use rmismc::rates::{estimate_increment_rates, least_squares, IncrementMethod, Sweep};
use rmismc::seed::SeedPath;
use rmismc::smc::{run_coupled_smc, SmcConfig};
use rmismc::MultiIndex;

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("telescoping exactness", telescoping),
        ("unbiased unnormalized estimators", unbiasedness),
        ("toy increment rates", toy_rates),
        ("toy MSE-cost slopes", toy_mse_slopes),
        ("2D FEM order and increment variance", pde_rates),
        ("2D PDE MSE-cost slopes", pde_mse_slopes),
        ("LGC rate audit and cost linearity", lgc_audit),
        ("rMISMC variance and cost in N", canonical_rates),
        ("determinism across thread counts", determinism),
        ("multinomial allocation moments", allocation_moments),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn variance(xs: &[f64]) -> f64 {
    let (m, _) = mean_se(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

// 1 ---------------------------------------------------------------------------

fn telescoping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for trial in 0..2000 {
        let offset = MultiIndex::from([trial % 2, (trial / 2) % 3]);
        let levels = vec![rng.random_range(0..=3u32), rng.random_range(0..=3u32)];
        let set = IndexSet::tensor_product(levels.clone(), offset.clone()).map_err(|e| e.to_string())?;
        let table: BTreeMap<MultiIndex, f64> = enumerate_index_set(&set)
            .into_iter()
            .map(|a| (a, rng.random_range(-1e3..1e3)))
            .collect();
        let sum: f64 = set
            .members()
            .iter()
            .map(|a| {
                subindex_expansion_from(a, &offset)
                    .iter()
                    .map(|t| f64::from(t.sign) * table[&t.index])
                    .sum::<f64>()
            })
            .sum();
        let corner = offset.add(&MultiIndex::from(levels));
        let want = table[&corner];
        worst = worst.max((sum - want).abs() / want.abs().max(1e-300));
    }
    check(worst < 1e-12, format!("max relative error {worst:.2e} over 2000 tables"))
}

// 2 ---------------------------------------------------------------------------

/// Independent toy oracle. Linear FEM is nodally exact for `-u'' = 1`, so the
/// level-`α` gains are the piecewise-linear interpolant of `z(1-z)/2` on
/// `2^α` intervals; `α = None` gives the exact solution.
struct ToyOracle {
    design: Vec<f64>,
    data: Vec<f64>,
    sd: f64,
}

impl ToyOracle {
    fn gain(z: f64, level: Option<u32>) -> f64 {
        let u = |z: f64| 0.5 * z * (1.0 - z);
        match level {
            None => u(z),
            Some(l) => {
                let k = (1u64 << l) as f64;
                let j = (z * k).floor().min(k - 1.0);
                let (z0, z1) = (j / k, (j + 1.0) / k);
                u(z0) + (u(z1) - u(z0)) * (z - z0) * k
            }
        }
    }

    fn likelihood(&self, level: Option<u32>, x: f64) -> f64 {
        let ss: f64 = self
            .design
            .iter()
            .zip(&self.data)
            .map(|(&z, &y)| (y - x * Self::gain(z, level)).powi(2))
            .sum();
        (-0.5 * ss / (self.sd * self.sd)).exp()
    }

    /// `∫ q(x) L(x) dπ_0` over `U[-1, 1]` by composite Simpson.
    fn integral(&self, level: Option<u32>, q: impl Fn(f64) -> f64) -> f64 {
        let n = 20_000;
        let h = 2.0 / n as f64;
        let f = |x: f64| 0.5 * q(x) * self.likelihood(level, x);
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }
}

fn toy_problem() -> (ToyModel, ToyOracle) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = ToyModel::synthetic(0.5, 0.2, &mut rng).expect("toy model");
    let oracle = ToyOracle {
        design: m.design().to_vec(),
        data: m.data().to_vec(),
        sd: m.noise_sd(),
    };
    (m, oracle)
}

fn within(label: &str, xs: &[f64], want: f64, lines: &mut Vec<String>) -> bool {
    let (m, se) = mean_se(xs);
    let z = (m - want) / se;
    lines.push(format!("{label} z={z:+.2}"));
    z.abs() <= 3.0
}

fn unbiasedness() -> Outcome {
    let (m, oracle) = toy_problem();
    let reps = 10_000;
    let smc = SmcConfig::default();
    let mut ok = true;
    let mut lines = Vec::new();

    // single level at α = 3
    let a = MultiIndex::from([3]);
    let runs: Vec<(f64, f64)> = (0..reps)
        .map(|r| {
            let mut rng = SeedPath::new(21).realization(r).rng();
            let e = run_coupled_smc(&m, &a, &a, &smc, 20, &mut rng).expect("smc");
            (e.f_phi(), e.f_one())
        })
        .collect();
    let num: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let den: Vec<f64> = runs.iter().map(|r| r.1).collect();
    ok &= within("Z_3", &den, oracle.integral(Some(3), |_| 1.0), &mut lines);
    ok &= within("γ_3(φ)", &num, oracle.integral(Some(3), |x| x * x), &mut lines);

    // increment at α = 3 with boundary 0
    let zero = MultiIndex::zeros(1);
    let runs: Vec<(f64, f64)> = (0..reps)
        .map(|r| {
            let mut rng = SeedPath::new(22).realization(r).rng();
            let e = run_coupled_smc(&m, &a, &zero, &smc, 20, &mut rng).expect("smc");
            (e.f_phi(), e.f_one())
        })
        .collect();
    let num: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let den: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let dz = oracle.integral(Some(3), |_| 1.0) - oracle.integral(Some(2), |_| 1.0);
    let dg = oracle.integral(Some(3), |x| x * x) - oracle.integral(Some(2), |x| x * x);
    ok &= within("ΔZ_3", &den, dz, &mut lines);
    ok &= within("Δγ_3(φ)", &num, dg, &mut lines);

    // randomized estimator: unbiased for the discretization-free limit
    let dist = AllocationDistribution::new(vec![4.0], vec![1.0], zero.clone()).expect("distribution");
    let runs: Vec<(f64, f64)> = (0..reps)
        .map(|r| {
            let seed = SeedPath::new(23).realization(r);
            let e = rmismc_estimate(&m, &dist, 100, 10, &smc, 1e-300, &seed).expect("rmismc");
            (e.numerator, e.denominator_raw)
        })
        .collect();
    let num: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let den: Vec<f64> = runs.iter().map(|r| r.1).collect();
    ok &= within("rMI Z", &den, oracle.integral(None, |_| 1.0), &mut lines);
    ok &= within("rMI γ(φ)", &num, oracle.integral(None, |x| x * x), &mut lines);

    check(ok, format!("{} (10^4 reps each)", lines.join(", ")))
}

// 3 ---------------------------------------------------------------------------

fn toy_rates() -> Outcome {
    let (m, _) = toy_problem();
    let sweep = Sweep::Direction {
        base: MultiIndex::zeros(1),
        direction: 0,
        steps: (1..=6).collect(),
    };
    let method = IncrementMethod::PriorMonteCarlo {
        samples: 1000,
        replications: 100,
    };
    let r = estimate_increment_rates(&m, &sweep, &MultiIndex::zeros(1), &method, &SeedPath::new(3))
        .map_err(|e| e.to_string())?;
    let (s, b) = (r.s(), r.beta());
    check(
        (s - 2.0).abs() <= 1.0 && (b - 4.0).abs() <= 1.0,
        format!("weak slope {:.3}, strong slope {:.3}", -s, -b),
    )
}

// 4 ---------------------------------------------------------------------------

fn slopes_of(cfg: ExperimentConfig) -> Result<BTreeMap<String, f64>, String> {
    let out = run_experiment(cfg, None, false).map_err(|e| e.to_string())?;
    if !out.summary.failures.is_empty() {
        return Err(format!("{} failed runs", out.summary.failures.len()));
    }
    out.summary
        .methods
        .iter()
        .map(|m| {
            m.slope()
                .map(|s| (m.name.clone(), s))
                .ok_or_else(|| format!("{}: no fit", m.name))
        })
        .collect()
}

fn slope_report(
    cfg: ExperimentConfig,
    targets: &[(&str, f64, f64)],
) -> Outcome {
    let rungs = match &cfg.ladder {
        Ladder::Budget { values } | Ladder::Tolerance { values } => values.len(),
    };
    let r = cfg.realizations;
    let slopes = slopes_of(cfg)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for &(name, want, tol) in targets {
        let s = *slopes.get(name).ok_or(format!("method {name} missing"))?;
        ok &= (s - want).abs() <= tol;
        parts.push(format!("{name} {s:.3} (target {want} ± {tol})"));
    }
    check(ok, format!("{}; {rungs} rungs, R = {r}", parts.join(", ")))
}

fn toy_mse_slopes() -> Outcome {
    let cfg = ExperimentConfig::from_path(&configs().join("toy.toml")).map_err(|e| e.to_string())?;
    if cfg.realizations < 100 {
        return Err(format!("config has R = {}", cfg.realizations));
    }
    slope_report(cfg, &[("SMC", -0.8, 0.15), ("MLSMC", -1.0, 0.15), ("rMLSMC", -1.0, 0.15)])
}

// 5 ---------------------------------------------------------------------------

fn pde_rates() -> Outcome {
    use std::f64::consts::PI;
    let exact = |z1: f64, z2: f64| (PI * z1).sin() * (PI * z2).sin();
    let f = |z1: f64, z2: f64| 2.0 * PI * PI * exact(z1, z2);
    let levels: Vec<f64> = (2..=6).map(f64::from).collect();
    let errs: Vec<f64> = (2..=6)
        .map(|l| fem_solve_2d((l, l), |_, _| 1.0, f).map(|s| s.l2_error(exact).log2()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let l2 = least_squares(&levels, &errs).slope;

    let cfg = ExperimentConfig::from_path(&configs().join("pde2d.toml")).map_err(|e| e.to_string())?;
    let (model, _) = build_model(&cfg).map_err(|e| e.to_string())?;
    let offset = model.start_level();
    let method = IncrementMethod::PriorMonteCarlo {
        samples: 400,
        replications: 10,
    };
    let mut betas = Vec::new();
    for dir in 0..2 {
        // mixed differences: both directions active at every index
        let sweep = Sweep::Direction {
            base: offset.add(&MultiIndex::from([1, 1])),
            direction: dir,
            steps: (0..=3).collect(),
        };
        let r = estimate_increment_rates(model.as_ref(), &sweep, &offset, &method, &SeedPath::new(5).method(dir as u32))
            .map_err(|e| e.to_string())?;
        betas.push(r.beta());
    }
    check(
        (l2 + 2.0).abs() <= 0.2 && betas.iter().all(|b| (b - 4.0).abs() <= 1.0),
        format!(
            "L² slope {l2:.3}, mixed-increment variance slopes {:.3}, {:.3}",
            -betas[0], -betas[1]
        ),
    )
}

// 6 ---------------------------------------------------------------------------

fn pde_mse_slopes() -> Outcome {
    let cfg = ExperimentConfig::from_path(&configs().join("pde2d.toml")).map_err(|e| e.to_string())?;
    if cfg.realizations < 50 {
        return Err(format!("config has R = {}", cfg.realizations));
    }
    slope_report(cfg, &[("MISMC-TP", -1.0, 0.2), ("MISMC-TD", -1.0, 0.2), ("rMISMC", -1.0, 0.2)])
}

// 7 ---------------------------------------------------------------------------

/// Property form of the LGC experiment, which is beyond desk budget at the
/// stated scale: the strong rate per direction, and linear expected cost in
/// `N` for the randomized allocation.
fn lgc_audit() -> Outcome {
    let cfg = ExperimentConfig::from_path(&configs().join("lgc.toml")).map_err(|e| e.to_string())?;
    let (model, _) = build_model(&cfg).map_err(|e| e.to_string())?;
    let start = model.start_level();
    let method = IncrementMethod::PriorMonteCarlo {
        samples: 200,
        replications: 10,
    };
    let mut betas = Vec::new();
    for dir in 0..2 {
        let sweep = Sweep::Direction {
            base: start.clone(),
            direction: dir,
            steps: (1..=4).collect(),
        };
        let r = estimate_increment_rates(model.as_ref(), &sweep, &start, &method, &SeedPath::new(7).method(dir as u32))
            .map_err(|e| e.to_string())?;
        betas.push(r.beta());
    }

    // cost charged per particle: one coupled evaluation touches every sub-index
    let evals = 1.0 + 4.0 * 2.0;
    let smc = SmcConfig::default();
    let unit = |a: &MultiIndex| -> f64 { subindex_expansion_from(a, &start).iter().map(|t| model.cost(&t.index)).sum() };
    let probe = start.add(&MultiIndex::from([1, 0]));
    let mut rng = SeedPath::new(71).rng();
    let realized = run_coupled_smc(model.as_ref(), &probe, &start, &smc, 4, &mut rng).map_err(|e| e.to_string())?;
    let charged = 4.0 * evals * unit(&probe);
    if realized.cost != charged {
        return Err(format!("sampler charged {} for a run costed at {charged}", realized.cost));
    }

    let dist = AllocationDistribution::new(cfg.rates.beta.clone(), model.cost_rates().to_vec(), start.clone())
        .map_err(|e| e.to_string())?;
    let n_min = 20;
    let reps = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let mut log_n = Vec::new();
    let mut log_cost = Vec::new();
    for k in 0..8 {
        let n = n_min << k;
        let mut total = 0.0;
        for _ in 0..reps {
            let alloc = sample_allocation(&dist, n, n_min, &mut rng).map_err(|e| e.to_string())?;
            total += alloc.iter().map(|(a, &na)| na as f64 * evals * unit(a)).sum::<f64>();
        }
        log_n.push((n as f64).log2());
        log_cost.push((total / reps as f64).log2());
    }
    let c = least_squares(&log_n, &log_cost).slope;
    check(
        betas.iter().all(|b| (b - 1.6).abs() <= 0.4) && (c - 1.0).abs() <= 0.1,
        format!(
            "variance slopes {:.3}, {:.3} (β target 1.6 ± 0.4); expected cost slope in N {c:.3} (N = 20..2560)",
            -betas[0], -betas[1]
        ),
    )
}

// 8 ---------------------------------------------------------------------------

fn canonical_rates() -> Outcome {
    let (m, _) = toy_problem();
    let smc = SmcConfig::default();
    let dist = AllocationDistribution::new(vec![4.0], vec![1.0], MultiIndex::zeros(1)).expect("distribution");
    let reps = 1000;
    let mut log_n = Vec::new();
    let mut log_var = Vec::new();
    let mut log_cost = Vec::new();
    for k in 0..5u32 {
        let n = 80usize << k;
        let runs: Vec<(f64, f64)> = (0..reps)
            .map(|r| {
                let seed = SeedPath::new(8).budget(k).realization(r);
                let e = rmismc_estimate(&m, &dist, n, 10, &smc, 1e-300, &seed).expect("rmismc");
                (e.denominator_raw, e.total_cost)
            })
            .collect();
        let den: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let cost: Vec<f64> = runs.iter().map(|r| r.1).collect();
        log_n.push((n as f64).log2());
        log_var.push(variance(&den).log2());
        log_cost.push(mean_se(&cost).0.log2());
    }
    let v = least_squares(&log_n, &log_var).slope;
    let c = least_squares(&log_n, &log_cost).slope;
    check(
        (v + 1.0).abs() <= 0.15 && (c - 1.0).abs() <= 0.1,
        format!("Var F(1) slope {v:.3}, expected cost slope {c:.3} (N = 80..1280, {reps} reps)"),
    )
}

// 9 ---------------------------------------------------------------------------

fn determinism() -> Outcome {
    let cfg = ExperimentConfig::from_path(&configs().join("smoke.toml")).map_err(|e| e.to_string())?;
    let files = ["records.csv", "mse.csv"];
    let run = |threads: usize| -> Result<Vec<Vec<u8>>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| run_experiment(cfg.clone(), Some(dir.path()), false))
            .map_err(|e| e.to_string())?;
        files
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).map_err(|e| e.to_string()))
            .collect()
    };
    let runs = [run(1)?, run(1)?, run(3)?, run(8)?];
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    check(
        same,
        format!("{} and {} compared over 1, 1, 3 and 8 threads", files[0], files[1]),
    )
}

// 10 --------------------------------------------------------------------------

fn allocation_moments() -> Outcome {
    let dist = AllocationDistribution::new(vec![4.0, 3.0], vec![1.0, 1.0], MultiIndex::from([2, 2]))
        .expect("distribution");
    let (n, n_min, draws) = (200usize, 10usize, 10_000);
    let watch: Vec<MultiIndex> = [[2, 2], [3, 2], [2, 3], [3, 3], [2, 4]].map(MultiIndex::from).to_vec();
    let p: Vec<f64> = watch.iter().map(|a| dist.probability(a).expect("p")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let samples: Vec<Vec<f64>> = (0..draws)
        .map(|_| {
            let c = sample_allocation(&dist, n, n_min, &mut rng).expect("allocation");
            watch.iter().map(|a| *c.get(a).unwrap_or(&0) as f64).collect()
        })
        .collect();
    let mean = |i: usize| n as f64 * p[i];
    let mut ok = true;
    let mut worst = 0.0f64;
    for i in 0..watch.len() {
        let xs: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        let (m, se) = mean_se(&xs);
        let z = (m - mean(i)) / se;
        worst = worst.max(z.abs());
        ok &= z.abs() <= 3.0;
        for j in i + 1..watch.len() {
            // centered at the exact means, so the product's mean is the covariance
            let xs: Vec<f64> = samples.iter().map(|s| (s[i] - mean(i)) * (s[j] - mean(j))).collect();
            let (m, se) = mean_se(&xs);
            let want = -(n as f64) * n_min as f64 * p[i] * p[j];
            let z = (m - want) / se;
            worst = worst.max(z.abs());
            ok &= z.abs() <= 3.0 && m < 0.0;
        }
    }
    check(
        ok,
        format!("5 means and 10 cross-covariances over 10^4 draws, max |z| = {worst:.2}"),
    )
}
