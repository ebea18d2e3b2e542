use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{explain_row, AttributionError};
use crate::data::{split, Dataset, Encoding, Predicate, SplitSpec};
use crate::estimators::{fit, EstimatorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRankSettings {
    /// Highest-scoring OOD rows to attribute.
    #[serde(default = "default_max_rows")]
    pub max_rows: usize,
    /// Defaults to `2M + 2048`.
    #[serde(default)]
    pub n_coalitions: Option<usize>,
    /// Train / validation / unused fractions for the in-distribution side.
    #[serde(default)]
    pub split: SplitSpec,
}

fn default_max_rows() -> usize {
    100
}

impl Default for SplitRankSettings {
    fn default() -> Self {
        Self { max_rows: default_max_rows(), n_coalitions: None, split: SplitSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFeatureResult {
    pub split_feature: String,
    pub estimator: String,
    /// 1 = most important by mean |phi| over the attributed OOD rows.
    pub rank: usize,
    /// `(feature, mean |phi|)`, most important first.
    pub ranking: Vec<(String, f64)>,
}

/// Splits `pool` with `predicate` (matching rows are OOD), fits `config` on
/// the in-distribution side, attributes the top-scoring OOD rows and reports
/// where `split_feature` lands in the mean-|phi| ranking.
pub fn split_feature_rank(
    pool: &Dataset,
    split_feature: &str,
    predicate: &Predicate,
    config: &EstimatorConfig,
    settings: &SplitRankSettings,
    seed: u64,
) -> Result<SplitFeatureResult, AttributionError> {
    let names: Vec<String> = pool.schema().names().map(str::to_string).collect();
    let target = names
        .iter()
        .position(|n| n == split_feature)
        .ok_or_else(|| AttributionError::Config(format!("unknown split feature '{split_feature}'")))?;
    let (ood_idx, in_idx): (Vec<usize>, Vec<usize>) = (0..pool.len()).partition(|&i| predicate.eval(pool.row(i)));
    if ood_idx.is_empty() || in_idx.is_empty() {
        return Err(AttributionError::Config(format!(
            "predicate '{}' does not split the pool into two non-empty cohorts ({} OOD, {} in-distribution)",
            predicate.text(),
            ood_idx.len(),
            in_idx.len()
        )));
    }
    let split_spec = SplitSpec { seed, ..settings.split };
    let (train, val, _) = split(&pool.select(&in_idx), &split_spec)?;
    let enc = Arc::new(Encoding::fit(&train)?);
    let train = enc.encode(&train)?;
    let val = enc.encode(&val)?;
    let ood = enc.encode(&pool.select(&ood_idx))?;
    let est = fit(&config.clone().with_seed(seed), &train, &val)?;

    let scores = est.score(&ood)?;
    let mut order: Vec<usize> = (0..ood.nrows()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(settings.max_rows.max(1));
    let attributions = order
        .par_iter()
        .enumerate()
        .map(|(i, &row)| explain_row(&est, &ood, row, &train, settings.n_coalitions, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut importance = vec![0.0; names.len()];
    for a in &attributions {
        for (imp, p) in importance.iter_mut().zip(&a.phi) {
            *imp += p.abs() / attributions.len() as f64;
        }
    }
    let mut ranked: Vec<usize> = (0..names.len()).collect();
    ranked.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    let rank = ranked.iter().position(|&f| f == target).expect("feature present") + 1;
    Ok(SplitFeatureResult {
        split_feature: split_feature.to_string(),
        estimator: config.label().to_string(),
        rank,
        ranking: ranked.into_iter().map(|f| (names[f].clone(), importance[f])).collect(),
    })
}
