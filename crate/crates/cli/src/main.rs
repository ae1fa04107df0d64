use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;

use orbital_lattice_cli::commands;
use orbital_lattice_cli::config::{Command, Model, PresetName, RunConfig};
use orbital_lattice_cli::export;

/// Hubbard parameters, orbital transfer and many-body checks for vibrating
/// optical lattices.
#[derive(Debug, Parser)]
#[command(name = "orblat", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (the ORBLAT_OUT_DIR variable takes precedence).
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum)]
    preset: Option<PresetName>,

    #[arg(long, value_enum)]
    model: Option<Model>,

    /// Worker threads for parallel sections.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        orbital_lattice::par::set_threads(n);
    }
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = cli.preset {
        config.preset = p;
    }
    if let Some(m) = cli.model {
        config.model = m;
    }
    if let Some(out) = cli.out {
        config.output = Some(out);
    }

    let outcome = commands::run(cli.command, &config)?;
    let dir = export::output_dir(config.output.as_deref());
    let written = outcome
        .artifacts
        .write_all(&dir)
        .with_context(|| format!("writing results to {}", dir.display()))?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
