//! AUC-ROC evaluation over repeated fits, score-distribution summaries and
//! graded synthetic shifts.

mod auc;
mod distribution;
mod graded;
mod trials;

pub use auc::auc_roc;
pub use distribution::{percentile, score_distribution, ScoreDistribution};
pub use graded::{graded_shift_curve, leading_shift_pattern, GradedCurve, GradedShiftConfig};
pub use trials::{run_trials, AucResult, CohortScores, EncodedGroup, EvaluationGrid, GridCell, NamedEstimator, TrialError};

use crate::data::DataError;
use crate::estimators::EstimatorError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty {0}")]
    Empty(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid evaluation settings: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Writes `estimator,cohort,bin_left,bin_right,count` rows.
pub fn write_distributions_csv<W: std::io::Write>(dists: &[ScoreDistribution], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["estimator", "cohort", "bin_left", "bin_right", "count"])?;
    for d in dists {
        for (b, count) in d.counts.iter().enumerate() {
            w.write_record([
                d.estimator.as_str(),
                d.cohort.as_str(),
                &d.bin_edges[b].to_string(),
                &d.bin_edges[b + 1].to_string(),
                &count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
