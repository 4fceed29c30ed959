use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use zenodev::cli::{parse_config, run_experiment, CliError, ExperimentKind};

/// Run a devices-in-superposition experiment from a JSON config.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Monte Carlo seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment name, overriding the config.
    #[arg(long)]
    experiment: Option<String>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io { path: args.config.clone(), message: e.to_string() })?;
    let mut cfg = parse_config(&text)?;
    if let Some(name) = &args.experiment {
        cfg.experiment = ExperimentKind::parse(name)?;
        cfg.validate()?;
    }
    let report = run_experiment(&cfg, args.seed)?;
    let (csv, json) = report.emit(&cfg, &args.out_dir)?;
    println!(
        "{}",
        serde_json::json!({
            "csv": csv,
            "json": json,
            "experiment": cfg.experiment.name(),
            "wall_clock_seconds": started.elapsed().as_secs_f64(),
        })
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
