//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mmrelay_core::sinr::Mode;

use crate::config::{load_config, parse_mode, Engine, ScenarioConfig};
use crate::error::{CliError, Result};
use crate::output::{to_csv, write_output};
use crate::presets::{list_presets, preset};
use crate::sweep::run_sweep;
use crate::validate::run_validation;

#[derive(Debug, Parser)]
#[command(name = "mmrelay", version, about = "Reliability sweeps for dual-hop mmWave relay links")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sweep described by a scenario file and write CSV.
    Sweep {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Compare both engines over a scenario and write a JSON report.
    Validate {
        #[arg(long, value_name = "PATH", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Use a built-in preset instead of a file.
        #[arg(long, value_name = "NAME", conflicts_with = "config")]
        preset: Option<String>,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Run a built-in figure preset.
    Preset {
        name: String,
        /// Print the preset scenario instead of running it.
        #[arg(long)]
        show: bool,
        #[command(flatten)]
        run: RunOptions,
    },
    /// List built-in presets.
    ListPresets,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunOptions {
    /// Output path; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    #[arg(long, value_parser = parse_engine)]
    pub engine: Option<Engine>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Worker threads; all cores when absent.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
}

fn parse_engine(s: &str) -> std::result::Result<Engine, String> {
    s.parse()
}

impl RunOptions {
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(e) = self.engine {
            cfg.engine = e;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        cfg.validate()
    }
}

/// Outcome of a command that completed without a configuration error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ValidationFailed,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::ValidationFailed => 1,
        }
    }
}

fn install_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    Ok(())
}

fn sweep(cfg: &ScenarioConfig) -> Result<Outcome> {
    let result = run_sweep(cfg)?;
    for r in result.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {}={} {} ({}): {}",
            r.sweep_var,
            r.value,
            r.metric,
            r.engine,
            r.error.as_deref().unwrap_or_default()
        );
    }
    write_output(&to_csv(&result), cfg.output.as_deref())?;
    Ok(Outcome::Success)
}

fn validate(cfg: &ScenarioConfig) -> Result<Outcome> {
    let report = run_validation(cfg)?;
    write_output(&report.to_json()?, cfg.output.as_deref())?;
    Ok(if report.pass { Outcome::Success } else { Outcome::ValidationFailed })
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Sweep { config, run } => {
            install_workers(run.workers)?;
            let mut cfg = load_config(&config)?;
            run.apply(&mut cfg)?;
            sweep(&cfg)
        }
        Command::Validate { config, preset: name, run } => {
            install_workers(run.workers)?;
            let mut cfg = match (config, name) {
                (Some(path), _) => load_config(&path)?,
                (None, Some(name)) => preset(&name)?,
                (None, None) => return Err(CliError::Usage("validate needs --config or --preset".into())),
            };
            run.apply(&mut cfg)?;
            validate(&cfg)
        }
        Command::Preset { name, show, run } => {
            let mut cfg = preset(&name)?;
            run.apply(&mut cfg)?;
            if show {
                write_output(&cfg.to_toml()?, run.out.as_deref())?;
                return Ok(Outcome::Success);
            }
            install_workers(run.workers)?;
            sweep(&cfg)
        }
        Command::ListPresets => {
            let mut text = String::new();
            for (name, title) in list_presets() {
                text.push_str(&format!("{name:<6} {title}\n"));
            }
            write_output(&text, None)?;
            Ok(Outcome::Success)
        }
    }
}

/// Parse `args`, run, and map the result to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(o) => o.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
