use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use varband::config::{parse_tau_grid, ConfigError, PipelineConfig};
use varband::pipeline::run_named_stage;

#[derive(Parser)]
#[command(
    name = "varband",
    version,
    about = "Telemetry anomaly detection: searched ensembles of recurrent forecasters with dropout uncertainty bands"
)]
struct Cli {
    /// JSON config file of flat dotted keys, e.g. {"train.epochs": 20}.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Channel id to process; repeat for several, omit for all.
    #[arg(long = "channel", global = true, value_name = "ID")]
    channels: Vec<String>,

    /// RNG seed; required, there is no wall-clock fallback.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory for artifacts and intermediates.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Generate and use the built-in synthetic channel.
    #[arg(long, global = true)]
    synthetic: bool,

    /// Inclusive tau sweep, e.g. 1..15; needs labelled segments.
    #[arg(long = "tau-grid", global = true, value_name = "A..B")]
    tau_grid: Option<String>,

    /// Shrink search, training and MC budgets to laptop scale.
    #[arg(long = "desk-scale", global = true)]
    desk_scale: bool,

    /// Extra config override KEY=VALUE; repeatable, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Stage {
    /// Check the dataset (or write the synthetic one) and inventory channels.
    Ingest,
    /// Scale each channel and apply adaptive-window smoothing.
    Smooth,
    /// Genetic search; trains forecasters and checkpoints the winners.
    Search,
    /// MC-dropout predictions combined across the ensemble.
    Predict,
    /// Score, threshold and flag anomalous segments.
    Detect,
    /// Confusion metrics per channel plus the aggregate.
    Evaluate,
    /// Render per-channel SVG plots.
    Plot,
    /// All stages in order, ending with report.json.
    Run,
}

impl Stage {
    fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Smooth => "smooth",
            Stage::Search => "search",
            Stage::Predict => "predict",
            Stage::Detect => "detect",
            Stage::Evaluate => "evaluate",
            Stage::Plot => "plot",
            Stage::Run => "run",
        }
    }
}

#[derive(Parser)]
struct Full {
    #[command(flatten)]
    common: Cli,
    #[command(subcommand)]
    stage: Stage,
}

/// Merge order: defaults, then the config file, then --desk-scale, then
/// individual flags, then --set overrides.
fn build_config(cli: &Cli) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if cli.desk_scale {
        cfg.desk_scale();
    }
    if !cli.channels.is_empty() {
        cfg.channels = cli.channels.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if cli.synthetic {
        cfg.synthetic = true;
    }
    if let Some(text) = &cli.tau_grid {
        let grid = parse_tau_grid(text).ok_or_else(|| ConfigError::BadValue {
            key: "tau.grid".to_string(),
            reason: format!("bad range {text:?}, expected A..B"),
        })?;
        cfg.tau_grid = Some(grid);
    }
    for spec in &cli.set {
        cfg.apply_set(spec)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let full = Full::parse();

    let cfg = match build_config(&full.common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    match run_named_stage(full.stage.name(), &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
