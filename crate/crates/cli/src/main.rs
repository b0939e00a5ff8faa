//! `stsbo`: run satisficing Thompson-sampling sweeps, write synthetic
//! objectives, check the information identities and re-aggregate traces.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stsbo_core::experiment::{self, ConfigError, Experiment, ExperimentConfig, KEYS};
use stsbo_core::theory::{run_suite, SuiteConfig};
use stsbo_core::Error;

#[derive(Parser)]
#[command(name = "stsbo", version, about = "Satisficing Thompson-sampling Bayesian optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (variant, beta, seed) of a configuration.
    Run {
        /// `key = value` configuration file; see `stsbo keys`.
        config: PathBuf,
        /// Override a configuration key, e.g. `--set beta=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory.
        #[arg(long, short, env = "STSBO_OUTPUT_DIR", default_value = "stsbo-out")]
        output: PathBuf,
        /// Concurrent runs.
        #[arg(long, short, default_value_t = 1)]
        jobs: usize,
        /// Dump every Blahut-Arimoto solve as CSV under `<output>/ba/`.
        #[arg(long)]
        ba_dump: bool,
    },
    /// Write the objective table a configuration would use.
    Synth {
        /// Optional configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Destination CSV; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Verify the information identities on random exact environments.
    Check {
        #[arg(long, default_value_t = 50)]
        envs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Add 1e-3 to one conditional entry; the suite must then fail.
        #[arg(long)]
        perturb: bool,
    },
    /// Re-aggregate the trace CSVs of a finished run directory.
    Report {
        dir: PathBuf,
        /// Destination directory; defaults to `<dir>/report`.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// List configuration keys and defaults.
    Keys,
}

enum Failure {
    Config(String),
    Runtime(String),
    Checks,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) | Error::Resource(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load_config(path: Option<&PathBuf>, set: &[String], extra: &[(String, String)]) -> Result<ExperimentConfig, Failure> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = set.iter().map(|s| experiment::parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    overrides.extend_from_slice(extra);
    Ok(ExperimentConfig::parse(&text, &overrides)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, set, output, jobs, ba_dump } => {
            let extra = if ba_dump { vec![("ba_dump".to_string(), "true".to_string())] } else { Vec::new() };
            let cfg = load_config(Some(&config), &set, &extra)?;
            let exp = Experiment::prepare(cfg)?;
            let summary = exp.run_and_write(&output, jobs)?;
            eprintln!(
                "{} runs, {} panels, {:.1} s; results in {}",
                summary.runs,
                summary.panels.len(),
                summary.wall_time_seconds,
                output.display()
            );
        }
        Command::Synth { config, set, out } => {
            let objective = load_config(config.as_ref(), &set, &[])?.build_objective()?;
            match out {
                Some(path) => objective.save(&path)?,
                None => objective.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::Check { envs, seed, perturb } => {
            let report = run_suite(&SuiteConfig { envs, seed, perturb, ..SuiteConfig::default() })?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            writeln!(std::io::stdout(), "{json}")?;
            if !report.passed {
                return Err(Failure::Checks);
            }
        }
        Command::Report { dir, out } => {
            let dest = out.unwrap_or_else(|| dir.join("report"));
            let n = experiment::report(&dir, &dest)?;
            eprintln!("{n} aggregate files in {}", dest.display());
        }
        Command::Keys => {
            let mut stdout = std::io::stdout().lock();
            for (key, default, help) in KEYS {
                writeln!(stdout, "{key} = {default}    # {help}")?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
