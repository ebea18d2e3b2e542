//! Experiment configuration read from JSON.
//!
//! Relative paths are resolved against the directory of the config file; the
//! snapshot stored in a report keeps them exactly as written.

use std::path::{Path, PathBuf};

use oodkit::attribution::SplitRankSettings;
use oodkit::data::{Predicate, SplitSpec, SyntheticSpec};
use oodkit::estimators::EstimatorConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_TRIALS: usize = 5;
pub const DEFAULT_BINS: usize = 30;

fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_output() -> String {
    "out".into()
}
fn default_top_n() -> usize {
    10
}
fn default_top_k() -> usize {
    5
}
fn default_inference_reps() -> usize {
    oodkit::bench::DEFAULT_INFERENCE_REPS
}
fn default_shap_reps() -> usize {
    oodkit::bench::DEFAULT_SHAP_REPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A CSV file and its JSON schema.
    Files { csv: String, schema: String },
    /// Generated in memory; the shifted cohort is available as a group.
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimatorConfig {
    /// Defaults to the family label (`PPCA`, `LOF`, `AE`, `VAE`, `Flow`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub config: EstimatorConfig,
}

impl NamedEstimatorConfig {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.config.label().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSource {
    /// Rows matching the predicate are excluded from the cohort before
    /// splitting and form the group.
    Predicate(String),
    /// Rows matching the predicate are removed from the training and
    /// validation splits only.
    Withhold(String),
    /// Rows from a second CSV with the same schema.
    Csv(String),
    /// The shifted cohort of a synthetic data source.
    SyntheticShifted(bool),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub name: String,
    #[serde(flatten)]
    pub source: GroupSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFeatureTest {
    pub feature: String,
    /// Rows matching this predicate are the OOD side of the split.
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSettings {
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

impl Default for OutlierSettings {
    fn default() -> Self {
        Self { top_n: default_top_n(), top_k: default_top_k() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AttributionConfig {
    /// Estimator names to explain; all configured estimators when empty.
    #[serde(default)]
    pub estimators: Vec<String>,
    #[serde(default)]
    pub split_features: Vec<SplitFeatureTest>,
    #[serde(default)]
    pub outliers: Option<OutlierSettings>,
    /// Cap on OOD rows attributed per split-feature test.
    #[serde(default)]
    pub max_rows: Option<usize>,
    /// Defaults to `2M + 2048`.
    #[serde(default)]
    pub n_coalitions: Option<usize>,
}

impl AttributionConfig {
    pub fn split_rank_settings(&self, split: SplitSpec) -> SplitRankSettings {
        let mut s = SplitRankSettings { n_coalitions: self.n_coalitions, split, ..Default::default() };
        if let Some(m) = self.max_rows {
            s.max_rows = m;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(default = "default_inference_reps")]
    pub n_inference: usize,
    #[serde(default = "default_shap_reps")]
    pub n_shap: usize,
    #[serde(default)]
    pub n_coalitions: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_inference: default_inference_reps(), n_shap: default_shap_reps(), n_coalitions: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub estimators: Vec<NamedEstimatorConfig>,
    #[serde(default)]
    pub groups: Vec<GroupConfig>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Binary categorical column held out of the model features and used to
    /// break score distributions down by class.
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default)]
    pub attribution: Option<AttributionConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default = "default_output")]
    pub output_dir: String,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Estimators paired with their report names; names must be unique.
    pub fn named_estimators(&self) -> Result<Vec<(String, EstimatorConfig)>, CliError> {
        let mut out: Vec<(String, EstimatorConfig)> = Vec::new();
        for e in &self.estimators {
            let name = e.name();
            if out.iter().any(|(n, _)| *n == name) {
                return Err(CliError::Config(format!("duplicate estimator name '{name}'")));
            }
            e.config.validate().map_err(|err| CliError::Config(format!("estimator '{name}': {err}")))?;
            out.push((name, e.config.clone()));
        }
        Ok(out)
    }

    /// Checks that do not need the data. `evaluate` additionally requires at
    /// least one estimator and one group.
    pub fn validate(&self) -> Result<(), CliError> {
        self.split.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.named_estimators()?;
        if self.n_trials == 0 {
            return Err(CliError::Config("n_trials must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(CliError::Config("bins must be at least 1".into()));
        }
        let mut names = std::collections::HashSet::new();
        for g in &self.groups {
            if g.name == "test" {
                return Err(CliError::Config("group name 'test' is reserved for the in-distribution test set".into()));
            }
            if !names.insert(g.name.as_str()) {
                return Err(CliError::Config(format!("duplicate group name '{}'", g.name)));
            }
            if matches!(g.source, GroupSource::SyntheticShifted(_)) && !matches!(self.data, DataSource::Synthetic(_)) {
                return Err(CliError::Config(format!("group '{}' needs a synthetic data source", g.name)));
            }
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(a) = &self.attribution {
            let known: Vec<String> = self.estimators.iter().map(NamedEstimatorConfig::name).collect();
            if let Some(missing) = a.estimators.iter().find(|n| !known.contains(n)) {
                return Err(CliError::Config(format!("attribution refers to unknown estimator '{missing}'")));
            }
        }
        Ok(())
    }

    /// Estimators selected for attribution.
    pub fn attribution_estimators(&self) -> Result<Vec<(String, EstimatorConfig)>, CliError> {
        let all = self.named_estimators()?;
        match &self.attribution {
            Some(a) if !a.estimators.is_empty() => Ok(all.into_iter().filter(|(n, _)| a.estimators.contains(n)).collect()),
            _ => Ok(all),
        }
    }

    /// Checks every predicate parses against the schema and every referenced
    /// feature exists.
    pub fn validate_against(&self, schema: &oodkit::data::FeatureSchema) -> Result<(), CliError> {
        let parse = |what: &str, text: &str| {
            Predicate::parse(text, schema).map(|_| ()).map_err(|e| CliError::Config(format!("{what}: {e}")))
        };
        for g in &self.groups {
            match &g.source {
                GroupSource::Predicate(p) | GroupSource::Withhold(p) => parse(&format!("group '{}'", g.name), p)?,
                _ => {}
            }
        }
        if let Some(a) = &self.attribution {
            for t in &a.split_features {
                if schema.index_of(&t.feature).is_none() {
                    return Err(CliError::Config(format!("unknown split feature '{}'", t.feature)));
                }
                parse(&format!("split feature '{}'", t.feature), &t.predicate)?;
            }
        }
        Ok(())
    }
}

/// Resolves `path` relative to `base` unless it is absolute.
pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "data": {"synthetic": {"n_rows": 100, "n_continuous": 3, "shift": [3, 0, 0], "seed": 1}},
        "estimators": [{"kind": "ppca", "q": 2}, {"name": "lof10", "kind": "lof", "k": 10}],
        "groups": [
            {"name": "shifted", "synthetic_shifted": true},
            {"name": "high", "withhold": "x0 > 1"}
        ]
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json_str(EXAMPLE).unwrap();
        assert_eq!(cfg.n_trials, 5);
        assert_eq!(cfg.output_dir, "out");
        let names: Vec<String> = cfg.named_estimators().unwrap().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["PPCA", "lof10"]);
        assert_eq!(cfg.groups[1].source, GroupSource::Withhold("x0 > 1".into()));
        cfg.validate().unwrap();
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = ExperimentConfig::from_json_str(EXAMPLE).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::from_json_str(EXAMPLE).unwrap();
        cfg.groups.push(cfg.groups[0].clone());
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_json_str(EXAMPLE).unwrap();
        cfg.estimators[1].name = Some("PPCA".into());
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_json_str(EXAMPLE).unwrap();
        cfg.data = DataSource::Files { csv: "a.csv".into(), schema: "a.json".into() };
        assert!(cfg.validate().is_err());

        assert!(ExperimentConfig::from_json_str(r#"{"data": {"nope": 1}}"#).is_err());
    }

    #[test]
    fn predicates_checked_against_schema() {
        let cfg = ExperimentConfig::from_json_str(EXAMPLE).unwrap();
        let DataSource::Synthetic(spec) = &cfg.data else { unreachable!() };
        cfg.validate_against(&spec.schema()).unwrap();
        let mut bad = cfg.clone();
        bad.groups[1].source = GroupSource::Withhold("age > 3".into());
        assert!(bad.validate_against(&spec.schema()).is_err());
    }
}
