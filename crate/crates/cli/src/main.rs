//! `rtl`: experiment runner for periodic transport equations.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{ExperimentConfig, FieldSource, Preset};
use run::Artifacts;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}")]
    Numerical(#[from] rtl_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(..) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "rtl", version, about = "Resonance classification, normal forms, escape functions and norm growth for ∂_t u = (m + εV)∂_x u + (ε/2)V_x u")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the resonant average of V (and regularize it when degenerate).
    Classify(Common),
    /// Order-N normal form, plus the constant-coefficient reduction when stable.
    Reduce(Common),
    /// Escape function of the resonant average.
    Escape(Common),
    /// Norm evolution; stability or growth experiment depending on the verdict.
    Evolve(Common),
    /// Stable and unstable runs from one datum with shared solver settings.
    Dichotomy(Common),
    /// Print the resolved configuration and exit.
    Config(Common),
    /// Print the configuration JSON schema.
    Schema,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; unset fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use a named preset for V.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    m: Option<i64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output root; RTL_OUTPUT_DIR takes precedence.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for ε sweeps.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
}

fn resolve(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = common.preset {
        cfg.v = FieldSource::Preset(p);
    }
    if let Some(m) = common.m {
        cfg.m = m;
    }
    if let Some(e) = common.epsilon {
        cfg.epsilon = e;
    }
    if let Some(d) = &common.output_dir {
        cfg.output.dir = d.clone();
    }
    if let Some(d) = std::env::var_os("RTL_OUTPUT_DIR").filter(|d| !d.is_empty()) {
        cfg.output.dir = PathBuf::from(d);
    }
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(CliError::Config(errors.join("; ")));
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Schema => {
            print!("{}", config::SCHEMA);
            return Ok(());
        }
        Command::Config(c) => {
            print!("{}", resolve(c)?.to_json());
            return Ok(());
        }
        Command::Classify(c) => ("classify", c),
        Command::Reduce(c) => ("reduce", c),
        Command::Escape(c) => ("escape", c),
        Command::Evolve(c) => ("evolve", c),
        Command::Dichotomy(c) => ("dichotomy", c),
    };
    let cfg = resolve(common)?;
    let v = cfg.v.build();
    let mut out = Artifacts::new(run::resolve_dir(&cfg, name))?;
    out.text("config.json", &cfg.to_json())?;
    match &cli.command {
        Command::Classify(_) => run::classify_cmd(&cfg, &v, &mut out)?,
        Command::Reduce(_) => run::reduce_cmd(&cfg, &v, &mut out)?,
        Command::Escape(_) => run::escape_cmd(&cfg, &v, &mut out)?,
        Command::Evolve(c) => run::evolve_cmd(&cfg, &v, c.jobs as usize, &mut out)?,
        Command::Dichotomy(_) => run::dichotomy_cmd(&cfg, &v, &mut out)?,
        Command::Config(_) | Command::Schema => unreachable!(),
    }
    for p in out.paths() {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rtl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
