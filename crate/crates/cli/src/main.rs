//! `parares`: runs configured simulations and writes tidy tables plus a
//! manifest into a directory named after the configuration hash.

mod config;
mod experiments;
mod gnuplot;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{ConfigError, ConfigSource, ExperimentKind};
use runner::{RunOptions, Status};

const EXIT_SIMULATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "parares", version, about = "Chirped parametric oscillator experiments")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Bin,
}

impl FormatArg {
    fn key(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Bin => "bin",
        }
    }
}

#[derive(Args, Clone)]
struct Overrides {
    /// Override a config value, e.g. `--set parameters.p1=0.3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Seed for stochastic experiments.
    #[arg(long)]
    seed: Option<u64>,

    /// Output format for tables and grids.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args, Clone)]
struct Execution {
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "PARARES_THREADS")]
    threads: Option<usize>,

    /// Root directory for run outputs.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write gnuplot scripts next to CSV tables.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        exec: Execution,
    },
    /// Run an experiment once per value of one config field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Field to vary: a dotted key or one of T, P1, P2.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; may be empty.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        exec: Execution,
    },
    /// Tabulate the analytic threshold lines and print a summary.
    Theory {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        exec: Execution,
    },
    /// Check a config file without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load(path: Option<&PathBuf>, default: ExperimentKind, o: &Overrides) -> Result<ConfigSource, ConfigError> {
    let mut src = match path {
        Some(p) => ConfigSource::from_path(p)?,
        None => ConfigSource::bare(default),
    };
    for s in &o.set {
        src.set(s)?;
    }
    if let Some(seed) = o.seed {
        src.set(&format!("ensemble.seed={seed}"))?;
    }
    if let Some(f) = o.format {
        src.set(&format!("output.format=\"{}\"", f.key()))?;
    }
    Ok(src)
}

fn options(exec: &Execution, cfg_dir: Option<PathBuf>) -> Result<RunOptions, String> {
    if let Some(n) = exec.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("cannot start {n} worker threads: {e}"))?;
    }
    Ok(RunOptions {
        out: exec.out.clone().or(cfg_dir).unwrap_or_else(|| PathBuf::from("out")),
        gnuplot: exec.gnuplot,
    })
}

fn config_failure(e: ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn report_run(report: &runner::RunReport) -> ExitCode {
    match report.status {
        Status::Ok => {
            println!("{}", report.dir.display());
            ExitCode::SUCCESS
        }
        _ => {
            eprintln!(
                "error: run failed ({}): {}",
                report.dir.display(),
                report.error.as_deref().unwrap_or("unknown error")
            );
            ExitCode::from(EXIT_SIMULATION)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::ValidateConfig { config, overrides } => {
            match load(Some(&config), ExperimentKind::TheoryTable, &overrides).and_then(|s| s.resolve()) {
                Ok(cfg) => {
                    println!("{}: ok ({}, hash {})", config.display(), cfg.experiment.name(), &cfg.hash()[..12]);
                    ExitCode::SUCCESS
                }
                Err(e) => config_failure(e),
            }
        }
        Command::Run { config, overrides, exec } => {
            let cfg = match load(Some(&config), ExperimentKind::TheoryTable, &overrides).and_then(|s| s.resolve()) {
                Ok(c) => c,
                Err(e) => return config_failure(e),
            };
            let opts = match options(&exec, cfg.output.dir.clone()) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match runner::run(&cfg, &opts) {
                Ok(report) => report_run(&report),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(EXIT_SIMULATION)
                }
            }
        }
        Command::Theory { config, overrides, exec } => {
            let cfg = match load(config.as_ref(), ExperimentKind::TheoryTable, &overrides).and_then(|s| s.resolve()) {
                Ok(c) => c,
                Err(e) => return config_failure(e),
            };
            if cfg.experiment != ExperimentKind::TheoryTable {
                eprintln!("error: `theory` needs experiment = \"theory-table\", got {}", cfg.experiment.name());
                return ExitCode::from(EXIT_CONFIG);
            }
            let opts = match options(&exec, cfg.output.dir.clone()) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match runner::run(&cfg, &opts) {
                Ok(report) => {
                    if let Some(out) = &report.outputs {
                        for line in experiments::theory_summary(out) {
                            println!("{line}");
                        }
                    }
                    report_run(&report)
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(EXIT_SIMULATION)
                }
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            overrides,
            exec,
        } => {
            let template = match load(Some(&config), ExperimentKind::TheoryTable, &overrides) {
                Ok(t) => t,
                Err(e) => return config_failure(e),
            };
            let values: Vec<String> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(String::from)
                .collect();
            let out_dir = template
                .table
                .get("output")
                .and_then(|o| o.get("dir"))
                .and_then(|d| d.as_str())
                .map(PathBuf::from);
            let members = runner::sweep_members(&template, &axis, &values);
            if values.is_empty() {
                if let Err(e) = template.resolve() {
                    return config_failure(e);
                }
            } else if members.iter().all(|m| m.is_err()) {
                // nothing can run: a template problem rather than a partial sweep
                let first = members.into_iter().find_map(|m| m.err()).expect("non-empty");
                return config_failure(first);
            }
            let opts = match options(&exec, out_dir) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match runner::sweep(&template, &members, &axis, &values, &opts) {
                Ok((dir, status)) => {
                    println!("{}", dir.display());
                    match status {
                        Status::Ok => ExitCode::SUCCESS,
                        _ => {
                            eprintln!("warning: sweep is partial; see {}/members.json", dir.display());
                            ExitCode::from(EXIT_PARTIAL)
                        }
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(EXIT_SIMULATION)
                }
            }
        }
    }
}
