use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cirlt::config::{ExperimentConfig, Tag};
use cirlt::run::{resolve_output_dir, run_experiment};
use cirlt::HarnessError;

/// Simulation and verification experiments for square roots of CIR processes.
#[derive(Debug, Parser)]
#[command(name = "cirlt", version)]
struct Cli {
    /// simulate, verify-main, regime-check, transform-roundtrip,
    /// converge-right, converge-left or dist-test
    tag: String,
    /// JSON config; the tag's defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one field, e.g. `--set params.a=0.25` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Print the effective config as JSON and exit
    #[arg(long)]
    print_config: bool,
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let tag: Tag = cli.tag.parse()?;
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_for(tag),
    };
    cfg.tag = tag;
    let cfg = cfg.with_overrides(&cli.sets)?;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = effective_config(&cli).and_then(|cfg| {
        if cli.print_config {
            println!("{}", cfg.to_json());
            return Ok(());
        }
        let dir = resolve_output_dir(&cfg);
        let m = run_experiment(&cfg, &dir, &mut |line| eprintln!("{line}"))?;
        println!("{}", serde_json::to_string_pretty(&m.summary).unwrap_or_default());
        eprintln!("wrote {} file(s) and manifest to {}", m.outputs.len(), dir.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
