//! Command-line front end.

pub mod config;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, Protocol};
pub use run::{run, sig12, Command, Outputs};

use crate::protocols::Branch;

#[derive(Debug, Parser)]
#[command(name = "entconc", version, about = "Entanglement concentration and repeater simulator")]
pub struct Args {
    #[command(subcommand)]
    pub command: Cmd,

    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Use expected counts instead of sampling.
    #[arg(long, global = true)]
    pub ideal: bool,

    /// Heralding branch (pp, pm, mp, mm).
    #[arg(long, global = true)]
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Cmd {
    /// Concentration of two identical pairs, output on (1, 2p).
    Concentrate,
    /// One-step repeater, output on (1, 3).
    Repeater,
    /// Local filtering of both pairs, then swapping.
    RepeaterFiltered,
    /// Bell-state swapping without concentration.
    BellSwap,
    /// CHSH test on the output of the configured protocol.
    Chsh,
    /// Interference scan over the photon 2 / photon 4 delay.
    DelayScan,
    /// Regenerates the concentration table for 1, 2 and 4 windows.
    Table1,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Concentrate => Command::Concentrate,
            Cmd::Repeater => Command::Repeater,
            Cmd::RepeaterFiltered => Command::RepeaterFiltered,
            Cmd::BellSwap => Command::BellSwap,
            Cmd::Chsh => Command::Chsh,
            Cmd::DelayScan => Command::DelayScan,
            Cmd::Table1 => Command::Table1,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error("{0}")]
    Model(#[from] crate::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for impossible branches, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(crate::Error::ImpossibleBranch { .. }) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Config file (if any) with command-line overrides applied.
pub fn load_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::parse(&fs::read_to_string(path).map_err(io_err(path))?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if args.ideal {
        cfg.ideal = true;
    }
    if let Some(b) = args.branch {
        cfg.branch = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_outputs(dir: &Path, outputs: &Outputs) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let report = dir.join("report.txt");
    fs::write(&report, &outputs.report).map_err(io_err(&report))?;
    for (name, contents) in &outputs.files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Runs one invocation; returns the report on success.
pub fn execute(args: &Args) -> Result<String, CliError> {
    let cfg = load_config(args)?;
    let outputs = run(args.command.into(), &cfg)?;
    write_outputs(&cfg.out_dir, &outputs)?;
    Ok(outputs.report)
}

/// Entry point of the binary; returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&args) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
