//! Single-sample timing of novelty inference and SHAP explanation.
//!
//! Times are monotonic wall-clock seconds, not user CPU time, and every
//! measurement runs on a dedicated single-thread pool.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::attribution::{default_coalitions, kernel_shap, AttributionError};
use crate::estimators::FittedEstimator;

pub const WARMUP_CALLS: usize = 10;
pub const DEFAULT_INFERENCE_REPS: usize = 1000;
pub const DEFAULT_SHAP_REPS: usize = 5;
pub const CLOCK: &str = "monotonic wall-clock seconds, single thread";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark settings: {0}")]
    Config(String),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_s: f64,
    /// Population standard deviation.
    pub std_s: f64,
    pub n: usize,
}

impl TimingStats {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self { mean_s: mean, std_s: var.sqrt(), n: samples.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub estimator: String,
    pub metric: String,
    pub inference_mean_s: f64,
    pub inference_std_s: f64,
    pub shap_mean_s: f64,
    pub shap_std_s: f64,
    pub n_inference: usize,
    pub n_shap: usize,
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, BenchError> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(1).build()?.install(f))
}

fn check_sample(sample: &Array2<f64>) -> Result<(), BenchError> {
    if sample.nrows() != 1 {
        return Err(BenchError::Config(format!("timing needs a single-row sample, got {} rows", sample.nrows())));
    }
    Ok(())
}

/// Times `n_reps` single-row scoring calls after [`WARMUP_CALLS`] untimed calls.
pub fn time_inference(est: &FittedEstimator, sample: &Array2<f64>, n_reps: usize) -> Result<TimingStats, BenchError> {
    check_sample(sample)?;
    if n_reps == 0 {
        return Err(BenchError::Config("n_reps must be at least 1".into()));
    }
    single_thread(|| {
        for _ in 0..WARMUP_CALLS {
            std::hint::black_box(est.score_matrix(sample)?);
        }
        let mut samples = Vec::with_capacity(n_reps);
        for _ in 0..n_reps {
            let start = Instant::now();
            std::hint::black_box(est.score_matrix(sample)?);
            samples.push(start.elapsed().as_secs_f64());
        }
        Ok(TimingStats::from_samples(&samples))
    })?
}

/// Times `n_reps` full KernelSHAP explanations of `sample`.
pub fn time_shap(
    est: &FittedEstimator,
    sample: &Array2<f64>,
    background: &Array2<f64>,
    n_reps: usize,
    n_coalitions: Option<usize>,
    seed: u64,
) -> Result<TimingStats, BenchError> {
    check_sample(sample)?;
    if n_reps == 0 {
        return Err(BenchError::Config("n_reps must be at least 1".into()));
    }
    let groups = est.encoding.feature_columns();
    let budget = n_coalitions.unwrap_or_else(|| default_coalitions(groups.len()));
    let row = sample.row(0).to_vec();
    let score = |m: &Array2<f64>| est.score_matrix(m);
    single_thread(|| {
        let mut samples = Vec::with_capacity(n_reps);
        for _ in 0..n_reps {
            let start = Instant::now();
            std::hint::black_box(kernel_shap(&score, &groups, background, &row, budget, seed)?);
            samples.push(start.elapsed().as_secs_f64());
        }
        Ok(TimingStats::from_samples(&samples))
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub n_inference: usize,
    pub n_shap: usize,
    pub n_coalitions: Option<usize>,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { n_inference: DEFAULT_INFERENCE_REPS, n_shap: DEFAULT_SHAP_REPS, n_coalitions: None, seed: 0 }
    }
}

/// One timing row per estimator, measured sequentially.
pub fn benchmark(
    estimators: &[(String, FittedEstimator)],
    sample: &Array2<f64>,
    background: &Array2<f64>,
    settings: &BenchSettings,
) -> Result<Vec<TimingRow>, BenchError> {
    estimators
        .iter()
        .map(|(name, est)| {
            let inf = time_inference(est, sample, settings.n_inference)?;
            let shap = time_shap(est, sample, background, settings.n_shap, settings.n_coalitions, settings.seed)?;
            Ok(TimingRow {
                estimator: name.clone(),
                metric: est.config.metric().to_string(),
                inference_mean_s: inf.mean_s,
                inference_std_s: inf.std_s,
                shap_mean_s: shap.mean_s,
                shap_std_s: shap.std_s,
                n_inference: inf.n,
                n_shap: shap.n,
            })
        })
        .collect()
}

/// `estimator,metric,inference_mean_s,inference_std_s,shap_mean_s,shap_std_s,n_inference,n_shap`.
pub fn write_timing_csv<W: std::io::Write>(rows: &[TimingRow], writer: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "estimator",
            "metric",
            "inference_mean_s",
            "inference_std_s",
            "shap_mean_s",
            "shap_std_s",
            "n_inference",
            "n_shap",
        ])?;
    }
    w.flush()?;
    Ok(())
}
