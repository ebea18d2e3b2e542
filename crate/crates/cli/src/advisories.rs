//! Non-fatal warnings about configurations that tend to behave poorly.

use oodkit::estimators::{EstimatorConfig, EstimatorKind};
use serde::{Deserialize, Serialize};

pub const CATEGORICAL_FRACTION_LIMIT: f64 = 0.5;
pub const HIGH_DIMENSION: usize = 50;
pub const LOF_MAX_TRAIN_ROWS: usize = 100_000;
pub const MINORITY_FRACTION_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advisory {
    pub code: String,
    pub message: String,
}

/// Facts about the data the advisories look at.
#[derive(Debug, Clone, PartialEq)]
pub struct DataStats {
    pub n_continuous: usize,
    pub n_categorical: usize,
    /// Width of the encoded matrix the estimators see.
    pub encoded_dim: usize,
    pub n_train: usize,
    /// Smallest class share of the configured label column, if any.
    pub label_minority_fraction: Option<f64>,
}

pub fn validate_advisories(estimators: &[(String, EstimatorConfig)], stats: &DataStats) -> Vec<Advisory> {
    let mut out = Vec::new();
    let n_features = stats.n_continuous + stats.n_categorical;
    if n_features > 0 {
        let frac = stats.n_categorical as f64 / n_features as f64;
        if frac > CATEGORICAL_FRACTION_LIMIT {
            out.push(Advisory {
                code: "categorical_fraction".into(),
                message: format!(
                    "{} of {} features ({:.0}%) are categorical; density and reconstruction scores can be dominated by \
                     one-hot columns, so compare estimators with this proportion in mind",
                    stats.n_categorical,
                    n_features,
                    100.0 * frac
                ),
            });
        }
    }
    if stats.encoded_dim > HIGH_DIMENSION {
        let affected: Vec<&str> =
            estimators.iter().filter(|(_, c)| !c.reduces_dimension()).map(|(n, _)| n.as_str()).collect();
        if !affected.is_empty() {
            out.push(Advisory {
                code: "high_dimension".into(),
                message: format!(
                    "input has {} encoded dimensions; {} do not reduce dimensionality and may degrade quickly as \
                     dimension grows",
                    stats.encoded_dim,
                    affected.join(", ")
                ),
            });
        }
    }
    if stats.n_train > LOF_MAX_TRAIN_ROWS {
        for (name, c) in estimators {
            if matches!(c.kind, EstimatorKind::Lof { .. }) {
                out.push(Advisory {
                    code: "lof_sample_size".into(),
                    message: format!(
                        "{name}: {} training rows; LOF time and memory grow quickly with the number of samples",
                        stats.n_train
                    ),
                });
            }
        }
    }
    if let Some(frac) = stats.label_minority_fraction {
        if frac < MINORITY_FRACTION_LIMIT {
            out.push(Advisory {
                code: "label_imbalance".into(),
                message: format!(
                    "minority class makes up {:.1}% of the data; scores of the underrepresented class are reported \
                     separately in the per-class distributions",
                    100.0 * frac
                ),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(n_cont: usize, n_cat: usize) -> DataStats {
        DataStats {
            n_continuous: n_cont,
            n_categorical: n_cat,
            encoded_dim: n_cont + 2 * n_cat,
            n_train: 1000,
            label_minority_fraction: None,
        }
    }

    fn codes(a: &[Advisory]) -> Vec<&str> {
        a.iter().map(|x| x.code.as_str()).collect()
    }

    #[test]
    fn categorical_fraction() {
        let a = validate_advisories(&[], &stats(66, 84));
        assert!(codes(&a).contains(&"categorical_fraction"));
        let a = validate_advisories(&[], &stats(49, 7));
        assert!(!codes(&a).contains(&"categorical_fraction"));
        assert!(validate_advisories(&[], &stats(5, 5)).is_empty());
    }

    #[test]
    fn dimension_only_for_non_reducing_estimators() {
        let ests = vec![("PPCA".to_string(), EstimatorConfig::ppca()), ("AE".to_string(), EstimatorConfig::ae())];
        assert!(validate_advisories(&ests, &stats(60, 0)).is_empty());
        let ests = vec![("Flow".to_string(), EstimatorConfig::maf()), ("LOF".to_string(), EstimatorConfig::lof())];
        let a = validate_advisories(&ests, &stats(60, 0));
        assert_eq!(codes(&a), ["high_dimension"]);
        assert!(a[0].message.contains("Flow, LOF"));
        assert!(validate_advisories(&ests, &stats(50, 0)).is_empty());
    }

    #[test]
    fn lof_sample_size() {
        let ests = vec![("LOF".to_string(), EstimatorConfig::lof())];
        assert!(validate_advisories(&ests, &stats(10, 0)).is_empty());
        let mut s = stats(10, 0);
        s.n_train = 100_001;
        assert_eq!(codes(&validate_advisories(&ests, &s)), ["lof_sample_size"]);
    }

    #[test]
    fn label_imbalance() {
        let mut s = stats(10, 0);
        s.label_minority_fraction = Some(0.3);
        assert!(validate_advisories(&[], &s).is_empty());
        s.label_minority_fraction = Some(0.05);
        assert_eq!(codes(&validate_advisories(&[], &s)), ["label_imbalance"]);
    }
}
