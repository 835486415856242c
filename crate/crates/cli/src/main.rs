//! `drst`: runs one experiment suite from a TOML config and writes CSV or JSON.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use drst_core::harness::{self, ExperimentConfig, ExperimentKind, ReportFormat};
use drst_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "drst", version, about = "Doubly robust self-training experiments")]
struct Cli {
    /// Suite to run; must match the config's `experiment`.
    #[arg(value_parser = parse_experiment)]
    experiment: ExperimentKind,
    #[arg(long)]
    config: PathBuf,
    /// Report path. Defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Replaces the config's master seed before hashing.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads for Monte Carlo trials.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_experiment(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli) -> drst_core::Result<()> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {k} threads: {e}")))?;
    }
    let mut config = ExperimentConfig::load(&cli.config)?;
    if config.experiment != cli.experiment {
        return Err(Error::Config(format!(
            "config describes {} but {} was requested",
            config.experiment, cli.experiment
        )));
    }
    if let Some(seed) = cli.seed_override {
        config.seed = seed;
    }
    let format = match cli.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    let out = cli.out.or_else(|| config.output.as_ref().map(PathBuf::from));
    let rows = harness::run_and_emit(&config, format, out.as_deref())?;
    log::info!("{} rows, config hash {}", rows.len(), config.hash());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                if let Some(trial) = e.trial_index() {
                    eprintln!("failed trial: {trial}");
                }
                ExitCode::from(3)
            } else if matches!(e, Error::Io(_)) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
