use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use swsysid::analysis;
use swsysid::estimator::{batch_fit, recursive_fit, ModeStatus};
use swsysid::harness::{self, ExperimentConfig};
use swsysid::model::{self, Trajectory};
use swsysid::{selftest, Error, Matrix, Result};

const OUT_ENV: &str = "SWSYSID_OUT";
const DEFAULT_OUT: &str = "swsysid-out";

#[derive(Parser)]
#[command(name = "swsysid", version, about = "Switched least squares identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write it as CSV
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a trajectory CSV and write per-mode estimates as JSON
    Fit {
        /// Trajectory CSV (t, s_t, x_1..x_n[, w_1..w_n])
        #[arg(long)]
        input: PathBuf,
        /// Optional config: supplies the mode count and the true matrices
        #[arg(long)]
        config: Option<PathBuf>,
        /// Mode count when no config is given (default: largest label seen)
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the assumption-2 margin and mean-square radius of a config's system
    Stability {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the Monte Carlo experiment and write curves, summary and plot data
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the hand-derived reference cases
    Selftest,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn out_dir(flag: Option<PathBuf>, config: Option<&ExperimentConfig>) -> PathBuf {
    flag.or_else(|| config.and_then(|c| c.output_dir.clone()))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write_file(path: &Path, content: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, content).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Simulate { config, seed, out } => {
            let config = ExperimentConfig::load(&config)?;
            let (sys, noise) = config.build()?;
            let seed = seed.unwrap_or(config.master_seed);
            let traj = model::simulate(&sys, &noise, config.horizon, seed)?;
            let path = out_dir(out, Some(&config)).join("trajectory.csv");
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            write_file(&path, &buf)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Fit {
            input,
            config,
            modes,
            out,
        } => {
            let text = fs::read_to_string(&input).map_err(|e| Error::Io {
                path: input.clone(),
                source: e,
            })?;
            let traj = Trajectory::read_csv(&text)?;
            let config = config.map(|p| ExperimentConfig::load(&p)).transpose()?;
            let truth = config.as_ref().map(|c| c.build()).transpose()?.map(|(s, _)| s);
            let k = match (&truth, modes) {
                (Some(sys), _) => sys.k(),
                (None, Some(k)) => k,
                (None, None) => traj.switches.iter().max().map_or(1, |m| m + 1),
            };
            let report = fit_report(&traj, k, truth.as_ref())?;
            let path = out_dir(out, config.as_ref()).join("estimates.json");
            write_file(&path, to_json(&report).as_bytes())?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::Stability { config } => {
            let config = ExperimentConfig::load(&config)?;
            print!("{}", to_json(&harness::stability_report(&config)?));
            Ok(0)
        }
        Command::Montecarlo {
            config,
            seed,
            runs,
            out,
            workers,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                config.master_seed = s;
            }
            if let Some(r) = runs {
                config.runs = r;
            }
            let dir = out_dir(out, Some(&config));
            // Output location is not part of the experiment's identity.
            config.output_dir = None;
            let result = harness::run_experiment(&config, workers)?;
            let manifest = harness::emit_artifacts(&result, &dir)?;
            print!("{}", to_json(&manifest));
            Ok(0)
        }
        Command::Selftest => {
            let results = selftest::run();
            let mut failed = 0;
            for r in &results {
                if r.passed {
                    println!("PASS  {}", r.name);
                } else {
                    failed += 1;
                    println!("FAIL  {}: {}", r.name, r.detail);
                }
            }
            println!("{} passed, {failed} failed", results.len() - failed);
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

#[derive(Serialize)]
struct ModeReport {
    mode: usize,
    status: ModeStatus,
    a_hat: Matrix,
    visits: usize,
    lambda_min: f64,
    lambda_max: f64,
    warmup_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_inf: Option<f64>,
}

#[derive(Serialize)]
struct FitReport {
    horizon: usize,
    modes: Vec<ModeReport>,
}

fn fit_report(traj: &Trajectory, k: usize, truth: Option<&swsysid::SwitchedSystem>) -> Result<FitReport> {
    let batch = batch_fit(traj, k)?;
    let recursive = recursive_fit(traj, k, None)?;
    let mut modes = Vec::with_capacity(k);
    for (i, m) in batch.per_mode.iter().enumerate() {
        let (lambda_min, lambda_max, visits) = batch.covariance_extremes(i)?;
        let error_inf = match truth {
            Some(sys) => Some(analysis::error_inf(&m.a_hat, sys.mode(i))?),
            None => None,
        };
        modes.push(ModeReport {
            mode: i + 1,
            status: m.status,
            a_hat: m.a_hat.clone(),
            visits,
            lambda_min,
            lambda_max,
            warmup_step: recursive.per_mode[i].warmup_step,
            error_inf,
        });
    }
    Ok(FitReport {
        horizon: traj.horizon(),
        modes,
    })
}
