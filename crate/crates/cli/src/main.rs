use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gcs_core::time::{parse_time, Fs};
use gcs_core::trace::TraceSet;
use gcssim::config::{ConfigError, ConfigFile, SweepAxis, SEED_ENV};
use gcssim::{
    cmd_check_params, cmd_explain, cmd_run, cmd_scenarios, cmd_sweep, load_spec, run_summary, sweep_values,
    write_sweep_csv, CliError, EXIT_PASS,
};

#[derive(Parser)]
#[command(name = "gcssim", version, about = "Gradient clock synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML config file.
    config: Option<PathBuf>,
    /// Builtin scenario instead of a config file.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Override a parameter, e.g. `--set mu=2e-4 --set kappa=12ps`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Source {
    fn config(&self) -> Result<ConfigFile, CliError> {
        match (&self.config, &self.scenario) {
            (Some(p), _) => Ok(ConfigFile::load(p)?),
            (None, Some(s)) => Ok(ConfigFile::builtin(s)),
            (None, None) => Err(ConfigError::Incomplete.into()),
        }
    }
}

fn time_arg(s: &str) -> Result<Fs, String> {
    parse_time(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, write its trace and report.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (defaults to `[output] dir`, else no files).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario for each value of one parameter.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// W, mu, rho, delta0 or u (defaults to `[sweep] axis`).
        #[arg(long)]
        axis: Option<SweepAxis>,
        /// Comma-separated values (defaults to `[sweep] values`).
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// CSV output file (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show a node's view and decision at a recorded time.
    Explain {
        trace: PathBuf,
        #[arg(long, value_parser = time_arg)]
        time: Fs,
        #[arg(long)]
        node: usize,
    },
    /// List builtin scenarios.
    Scenarios,
    /// Validate parameters and print the derived bounds.
    CheckParams {
        #[command(flatten)]
        source: Source,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    match cmd {
        Command::Run { source, out } => {
            let cfg = source.config()?;
            let spec = load_spec(&cfg, &source.overrides, env_seed.as_deref())?;
            let out = out.or(cfg.output.dir.clone());
            let r = cmd_run(&spec, out.as_deref())?;
            print!("{}", run_summary(&r));
            Ok(r.exit_code())
        }
        Command::Sweep { source, axis, values, seeds, threads, out } => {
            let cfg = source.config()?;
            let spec = load_spec(&cfg, &source.overrides, env_seed.as_deref())?;
            let section = cfg.sweep.as_ref();
            let axis = axis
                .or(section.map(|s| s.axis))
                .ok_or_else(|| ConfigError::Sweep("no axis given".to_string()))?;
            let values = if values.is_empty() {
                section.map(|s| sweep_values(&s.values)).transpose()?.unwrap_or_default()
            } else {
                values
            };
            let seeds = if seeds.is_empty() { section.map(|s| s.seeds.clone()).unwrap_or_default() } else { seeds };
            let rows = cmd_sweep(&spec, axis, &values, &seeds, threads)?;
            match out {
                Some(p) => write_sweep_csv(&rows, std::fs::File::create(p)?)?,
                None => write_sweep_csv(&rows, std::io::stdout().lock())?,
            }
            Ok(EXIT_PASS)
        }
        Command::Explain { trace, time, node } => {
            let t = TraceSet::read_dir(&trace)?;
            print!("{}", cmd_explain(&t, time, node)?);
            Ok(EXIT_PASS)
        }
        Command::Scenarios => {
            print!("{}", cmd_scenarios());
            Ok(EXIT_PASS)
        }
        Command::CheckParams { source } => {
            let spec = load_spec(&source.config()?, &source.overrides, env_seed.as_deref())?;
            print!("{}", cmd_check_params(&spec)?);
            Ok(EXIT_PASS)
        }
    }
}
