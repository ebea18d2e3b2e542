use serde::{Deserialize, Serialize};

use super::EvalError;

/// Percentile `p` in `[0, 100]` of ascending `sorted`, interpolating linearly
/// between order statistics at rank `p/100 * (n - 1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Scores of one cohort clipped to the in-distribution test range and binned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub estimator: String,
    /// `test` or the OOD group name.
    pub cohort: String,
    /// 5th and 95th percentile of the in-distribution test scores.
    pub clip: (f64, f64),
    pub clipped: Vec<f64>,
    /// `bins + 1` equal-width edges over the clip range.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Clips every cohort to the 5-95% range of `test_scores` and histograms it.
/// The first entry is the test cohort itself.
pub fn score_distribution(
    estimator: &str,
    test_scores: &[f64],
    group_scores: &[(String, Vec<f64>)],
    bins: usize,
) -> Result<Vec<ScoreDistribution>, EvalError> {
    if test_scores.is_empty() {
        return Err(EvalError::Empty("test scores".into()));
    }
    if bins == 0 {
        return Err(EvalError::Config("histogram needs at least one bin".into()));
    }
    if test_scores.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("test scores".into()));
    }
    let mut sorted = test_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (percentile(&sorted, 5.0), percentile(&sorted, 95.0));
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();

    let cohort = |name: &str, scores: &[f64]| {
        let clipped: Vec<f64> = scores.iter().map(|v| v.clamp(lo, hi)).collect();
        let mut counts = vec![0usize; bins];
        for &v in &clipped {
            let b = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
            counts[b] += 1;
        }
        ScoreDistribution {
            estimator: estimator.to_string(),
            cohort: name.to_string(),
            clip: (lo, hi),
            clipped,
            bin_edges: bin_edges.clone(),
            counts,
        }
    };
    let mut out = vec![cohort("test", test_scores)];
    out.extend(group_scores.iter().map(|(name, s)| cohort(name, s)));
    Ok(out)
}
