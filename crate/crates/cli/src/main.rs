use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rmismc::harness::{
    run_experiment, run_rates, simulate_data, validate, Experiment, ExperimentConfig, ExperimentOutput,
};
use rmismc::Error;

#[derive(Parser)]
#[command(name = "rmismc", version, about = "Multi-index SMC experiments")]
struct Cli {
    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the output directory of the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Format of what is printed to stdout; `json` also writes records.json.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment and write records, MSE table, summary and plot.
    Run { config: PathBuf },
    /// Fit weak and strong increment rates from the [audit] block.
    Rates { config: PathBuf },
    /// Compute the reference value and cache it in the output directory.
    Reference { config: PathBuf },
    /// Write synthetic observations or a point pattern to CSV.
    SimulateData {
        config: PathBuf,
        /// Output file (default: <out-dir>/data.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the config and print the plan for every method and rung.
    Validate { config: PathBuf },
}

impl Command {
    fn config(&self) -> &Path {
        match self {
            Command::Run { config }
            | Command::Rates { config }
            | Command::Reference { config }
            | Command::SimulateData { config, .. }
            | Command::Validate { config } => config,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::FailureThreshold { .. } => 3,
        e if e.is_config_error() => 2,
        _ => 1,
    }
}

fn execute(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::from_path(cli.command.config())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let json = cli.format == Format::Json;
    let mut stdout = std::io::stdout().lock();

    match &cli.command {
        Command::Run { .. } => {
            let result = run_experiment(cfg, Some(&out_dir), json);
            let out = match result {
                Ok(out) => out,
                Err(e @ Error::FailureThreshold { .. }) => {
                    eprintln!("outputs written to {}", out_dir.display());
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            print_run(&mut stdout, &out, json)?;
            for w in &out.summary.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("outputs written to {}", out_dir.display());
        }
        Command::Rates { .. } => {
            let report = run_rates(&cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("rates.json"), serde_json::to_string_pretty(&report)?)?;
            if json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                writeln!(stdout, "direction,s,beta,gamma")?;
                for (i, g) in report.gamma.iter().enumerate() {
                    writeln!(stdout, "{i},{},{},{g}", opt(report.s[i]), opt(report.beta[i]))?;
                }
            }
        }
        Command::Reference { .. } => {
            let exp = Experiment::new(cfg)?;
            let r = exp.reference(Some(&out_dir))?;
            if json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&r)?)?;
            } else {
                writeln!(stdout, "value,standard_error\n{},{}", r.value, r.standard_error)?;
            }
        }
        Command::SimulateData { output, .. } => {
            let path = output.clone().unwrap_or_else(|| out_dir.join("data.csv"));
            let p = simulate_data(&cfg, &path)?;
            if json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&p)?)?;
            } else {
                writeln!(stdout, "wrote {} observations ({}) to {}", p.count, p.source, path.display())?;
            }
        }
        Command::Validate { .. } => {
            let report = validate(&cfg)?;
            if json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                writeln!(stdout, "method,rung,tolerance,level,n,predicted_cost")?;
                for (name, plans) in &report.methods {
                    for p in plans {
                        let n = p.n.unwrap_or_else(|| p.particles.values().sum());
                        let level = p.level.map(|l| l.to_string()).unwrap_or_default();
                        writeln!(stdout, "{name},{},{},{level},{n},{}", p.rung, p.tolerance, p.predicted_cost)?;
                    }
                }
                eprintln!(
                    "config ok: predicted total cost {:.3e} over {} realizations",
                    report.predicted_total_cost, cfg.realizations
                );
            }
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn print_run(w: &mut impl Write, out: &ExperimentOutput, json: bool) -> Result<(), Error> {
    if json {
        writeln!(w, "{}", serde_json::to_string_pretty(&out.summary)?)?;
        return Ok(());
    }
    writeln!(w, "method,slope,intercept,r_squared")?;
    for m in &out.summary.methods {
        match &m.fit {
            Some(f) => writeln!(w, "{},{},{},{}", m.name, f.slope, f.intercept, f.r_squared)?,
            None => writeln!(w, "{},,,", m.name)?,
        }
    }
    Ok(())
}
