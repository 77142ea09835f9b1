use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nlfrac::config::ExperimentConfig;
use nlfrac::experiment::{self, RunMode};
use nlfrac::Error;

/// Experiment runner for the nonlinear fractional equation with exterior data.
#[derive(Debug, Parser)]
#[command(name = "nlfrac", version)]
struct Cli {
    /// TOML configuration; omitted keys take the reference values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// forward, dn, linearize, runge, invert-oracle, invert-exterior or verify-bounds.
    #[arg(long)]
    mode: Option<String>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Base seed for measurement noise; TOML integers cap it at 2^63 - 1.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,

    /// `key=value` with a dotted key, e.g. `grid.n_points=257`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_solver_failure() {
        3
    } else if err.is_inversion_failure() {
        4
    } else if matches!(err, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn main_inner(cli: Cli) -> Result<(), Error> {
    let mut overrides = cli.overrides;
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path, &overrides)?,
        None => ExperimentConfig::from_toml_str("", &overrides)?,
    };
    let mode: RunMode = cli
        .mode
        .as_deref()
        .or(config.mode.as_deref())
        .ok_or_else(|| Error::Config("no mode given (use --mode or the mode key)".into()))?
        .parse()?;
    let out = cli
        .out
        .or_else(|| config.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let artifacts = experiment::run(&config, mode)?;
    let manifest = experiment::write_artifacts(&out, &config, mode, &artifacts)?;
    println!("{mode}: {} files in {}", manifest.files.len(), out.display());
    for (key, value) in &manifest.summary {
        println!("  {key} = {value}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
