//! Configuration-driven experiment runner: synthetic data, fitting, scoring,
//! evaluation grids, interpretability tests and timing, all reported to one
//! `report.json` with CSV sidecars.

pub mod advisories;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use commands::Context;
use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAILED_CELLS: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] oodkit::data::DataError),
    #[error(transparent)]
    Estimator(#[from] oodkit::estimators::EstimatorError),
    #[error(transparent)]
    Eval(#[from] oodkit::eval::EvalError),
    #[error(transparent)]
    Attribution(#[from] oodkit::attribution::AttributionError),
    #[error(transparent)]
    Bench(#[from] oodkit::bench::BenchError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "oodkit", version, about = "Fit, evaluate and explain novelty detectors on tabular data")]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured synthetic dataset as CSV plus schema JSON.
    Synth {
        /// File name stem.
        #[arg(long, default_value = "synthetic")]
        name: String,
    },
    /// Fit every configured estimator and save it under `models/`.
    Fit,
    /// Score a CSV with a saved model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<out>/scores.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// AUC grid over estimators and OOD groups, with score distributions.
    Evaluate,
    /// Split-feature ranks and per-outlier explanations.
    Explain,
    /// Single-sample inference and SHAP timings.
    Bench,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(out) = &cli.out {
        // Absolute so it is not re-anchored at the config directory.
        let out = std::path::absolute(out).map_err(|e| CliError::io(out, e))?;
        config.output_dir = out.to_string_lossy().into_owned();
    }
    Ok(Context { config, base })
}

/// Runs one subcommand and returns the process exit code.
pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Score { model, input, output } => {
            let out = output.clone().unwrap_or_else(|| cli.out.clone().unwrap_or_else(|| "out".into()).join("scores.csv"));
            let n = commands::cmd_score(model, input, &out)?;
            eprintln!("scored {n} rows -> {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Synth { name } => {
            for p in commands::cmd_synth(&context(cli)?, name)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(EXIT_OK)
        }
        Command::Fit => {
            for p in commands::cmd_fit(&context(cli)?)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(EXIT_OK)
        }
        Command::Evaluate | Command::Explain | Command::Bench => {
            let ctx = context(cli)?;
            let report = match cli.command {
                Command::Evaluate => commands::cmd_evaluate(&ctx)?,
                Command::Explain => commands::cmd_explain(&ctx)?,
                _ => commands::cmd_bench(&ctx)?,
            };
            let dir = ctx.out_dir();
            report.write(&dir)?;
            eprintln!("wrote {}", dir.join("report.json").display());
            let failed: Vec<_> = report.grid.iter().flat_map(|g| g.failures()).collect();
            for cell in &failed {
                eprintln!("failed: {} on {}", cell.estimator(), cell.group());
            }
            Ok(if failed.is_empty() { EXIT_OK } else { EXIT_FAILED_CELLS })
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_ERROR;
        }
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
