use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{auc_roc, EvalError, NamedEstimator};
use crate::data::{generate_synthetic, split, Encoding, SplitSpec, SyntheticSpec};
use crate::estimators::fit;

/// Shift direction with `1.0` on the first `ceil(fraction * n)` continuous features.
pub fn leading_shift_pattern(n_continuous: usize, fraction: f64) -> Vec<f64> {
    let k = ((fraction * n_continuous as f64).ceil() as usize).min(n_continuous);
    (0..n_continuous).map(|j| if j < k { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedShiftConfig {
    /// In-distribution law and cohort sizes; its `shift` field is ignored.
    pub base: SyntheticSpec,
    /// Per-continuous-feature direction, scaled by each magnitude.
    pub pattern: Vec<f64>,
    /// Ascending, starting at 0.
    pub magnitudes: Vec<f64>,
    pub split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedCurve {
    pub estimator: String,
    pub magnitudes: Vec<f64>,
    pub aucs: Vec<f64>,
}

impl GradedCurve {
    /// True if no AUC drops by more than `slack` below any earlier one.
    pub fn is_non_decreasing(&self, slack: f64) -> bool {
        let mut best = f64::NEG_INFINITY;
        for &a in &self.aucs {
            if a < best - slack {
                return false;
            }
            best = best.max(a);
        }
        true
    }
}

/// Fits each estimator once on the in-distribution split and scores shifted
/// cohorts of increasing magnitude. All cohorts share the generator's noise
/// draws, so they differ only by the size of the shift.
pub fn graded_shift_curve(estimators: &[NamedEstimator], cfg: &GradedShiftConfig, seed: u64) -> Result<Vec<GradedCurve>, EvalError> {
    if cfg.magnitudes.first() != Some(&0.0) {
        return Err(EvalError::Config("shift magnitudes must start at 0".into()));
    }
    if cfg.magnitudes.windows(2).any(|w| w[1] < w[0]) || cfg.magnitudes.iter().any(|m| !m.is_finite()) {
        return Err(EvalError::Config("shift magnitudes must be finite and ascending".into()));
    }
    if cfg.pattern.len() != cfg.base.n_continuous {
        return Err(EvalError::Config(format!(
            "shift pattern has length {}, expected {}",
            cfg.pattern.len(),
            cfg.base.n_continuous
        )));
    }
    let mut cohorts = Vec::with_capacity(cfg.magnitudes.len());
    let mut in_dist = None;
    for &m in &cfg.magnitudes {
        let mut spec = cfg.base.clone();
        spec.shift = cfg.pattern.iter().map(|p| p * m).collect();
        let (data, shifted) = generate_synthetic(&spec)?;
        in_dist.get_or_insert(data);
        cohorts.push(shifted);
    }
    let data = in_dist.expect("at least one magnitude");
    let (train, val, test) = split(&data, &cfg.split)?;
    let enc = Arc::new(Encoding::fit(&train)?);
    let (train, val, test) = (enc.encode(&train)?, enc.encode(&val)?, enc.encode(&test)?);
    let cohorts = cohorts.iter().map(|c| enc.encode(c)).collect::<Result<Vec<_>, _>>()?;

    estimators
        .par_iter()
        .map(|named| {
            let est = fit(&named.config.clone().with_seed(seed), &train, &val)?;
            let test_scores = est.score(&test)?.to_vec();
            let aucs = cohorts
                .iter()
                .map(|c| auc_roc(&test_scores, est.score(c)?.as_slice().expect("contiguous")))
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(GradedCurve { estimator: named.name.clone(), magnitudes: cfg.magnitudes.clone(), aucs })
        })
        .collect()
}
