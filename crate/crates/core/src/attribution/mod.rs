//! KernelSHAP attributions of novelty scores at raw-feature granularity, and
//! the two interpretability tests built on them: the rank of the feature that
//! defined an artificial split, and per-outlier top-feature explanations.

mod kernel;
mod split_rank;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kernel::{
    cap_background, default_coalitions, exact_shapley, kernel_shap, shapley_kernel, ShapValues, MAX_BACKGROUND,
};
pub use split_rank::{split_feature_rank, SplitFeatureResult, SplitRankSettings};

use crate::data::{format_float, ColumnBlock, DataError, EncodedMatrix, Encoding, FeatureKind};
use crate::estimators::{EstimatorError, FittedEstimator};

#[derive(Debug, thiserror::Error)]
pub enum AttributionError {
    #[error("invalid attribution settings: {0}")]
    Config(String),
    #[error("{0}")]
    Singular(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Shapley values for one encoded row, one per raw feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub row_id: String,
    pub base_value: f64,
    pub feature_names: Vec<String>,
    pub phi: Vec<f64>,
    pub target: f64,
}

impl ShapAttribution {
    /// `base_value + sum(phi) - target`; zero up to rounding.
    pub fn additivity_gap(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>() - self.target
    }
}

/// Attributes `est`'s score on row `row` of `x`.
pub fn explain_row(
    est: &FittedEstimator,
    x: &EncodedMatrix,
    row: usize,
    background: &EncodedMatrix,
    n_coalitions: Option<usize>,
    seed: u64,
) -> Result<ShapAttribution, AttributionError> {
    let encoding = &est.encoding;
    let groups = encoding.feature_columns();
    let budget = n_coalitions.unwrap_or_else(|| default_coalitions(groups.len()));
    let score = |m: &ndarray::Array2<f64>| est.score_matrix(m);
    let values = x.values.row(row).to_vec();
    let shap = kernel_shap(&score, &groups, &background.values, &values, budget, seed)?;
    Ok(ShapAttribution {
        row_id: x.row_ids[row].clone(),
        base_value: shap.base_value,
        feature_names: encoding.schema().names().map(str::to_string).collect(),
        phi: shap.phi,
        target: shap.target,
    })
}

/// Raw value of a feature as shown in explanations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Num(f64),
    Level(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub name: String,
    pub phi: f64,
    pub value: FeatureValue,
    /// Background mean of the continuous feature, or the background frequency
    /// of the row's level for a categorical feature.
    pub in_dist_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierExplanation {
    pub row_id: String,
    pub score: f64,
    pub base_value: f64,
    /// Ordered by |phi|, largest first.
    pub features: Vec<FeatureContribution>,
}

impl FeatureValue {
    pub fn text(&self) -> String {
        match self {
            FeatureValue::Num(v) => format_float(*v),
            FeatureValue::Level(l) => l.clone(),
        }
    }
}

fn contribution(encoding: &Encoding, background: &EncodedMatrix, row: &[f64], feature: usize, phi: f64) -> FeatureContribution {
    let spec = &encoding.schema().features()[feature];
    let bg_col_mean = |j: usize| background.values.column(j).mean().unwrap_or(0.0);
    let (value, in_dist_mean) = match (&encoding.blocks()[feature], &spec.kind) {
        (ColumnBlock::Continuous { column, mean, std }, _) => {
            (FeatureValue::Num(row[*column] * std + mean), bg_col_mean(*column) * std + mean)
        }
        (ColumnBlock::Categorical { start, n_levels }, FeatureKind::Categorical { levels }) => {
            let slice = &row[*start..start + n_levels];
            let level = slice.iter().enumerate().fold(0, |best, (i, &v)| if v > slice[best] { i } else { best });
            (FeatureValue::Level(levels[level].clone()), bg_col_mean(start + level))
        }
        _ => unreachable!("encoding blocks follow the schema"),
    };
    FeatureContribution { name: spec.name.clone(), phi, value, in_dist_mean }
}

/// Explains the `top_n` highest-scoring rows of `test`, keeping the `top_k`
/// features by |phi| for each. Rows are explained in parallel; row `i` of the
/// ranking uses seed `seed + i`.
pub fn explain_outliers(
    est: &FittedEstimator,
    test: &EncodedMatrix,
    background: &EncodedMatrix,
    top_n: usize,
    top_k: usize,
    n_coalitions: Option<usize>,
    seed: u64,
) -> Result<Vec<OutlierExplanation>, AttributionError> {
    if top_n > test.nrows() {
        return Err(AttributionError::Config(format!("top_n = {top_n} exceeds the {} test rows", test.nrows())));
    }
    if top_n == 0 {
        return Ok(Vec::new());
    }
    let scores = est.score(test)?;
    let mut order: Vec<usize> = (0..test.nrows()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(top_n);
    order
        .par_iter()
        .enumerate()
        .map(|(rank, &row)| {
            let attr = explain_row(est, test, row, background, n_coalitions, seed.wrapping_add(rank as u64))?;
            let values = test.values.row(row).to_vec();
            let mut features: Vec<FeatureContribution> =
                (0..attr.phi.len()).map(|f| contribution(&est.encoding, background, &values, f, attr.phi[f])).collect();
            features.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()));
            features.truncate(top_k);
            Ok(OutlierExplanation { row_id: attr.row_id, score: attr.target, base_value: attr.base_value, features })
        })
        .collect()
}
