use std::path::Path;

use oodkit::attribution::{OutlierExplanation, SplitFeatureResult};
use oodkit::bench::TimingRow;
use oodkit::eval::{EvaluationGrid, ScoreDistribution};
use serde::{Deserialize, Serialize};

use crate::advisories::Advisory;
use crate::config::ExperimentConfig;
use crate::pipeline::DatasetSummary;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorExplanations {
    pub estimator: String,
    pub explanations: Vec<OutlierExplanation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Interpretability {
    pub split_features: Vec<SplitFeatureResult>,
    pub outliers: Vec<EstimatorExplanations>,
}

/// Everything one run produced. Sections a subcommand does not compute are
/// `null` (or empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub grid: Option<EvaluationGrid>,
    pub distributions: Vec<ScoreDistribution>,
    pub interpretability: Option<Interpretability>,
    pub timing: Option<Vec<TimingRow>>,
    pub warnings: Vec<Advisory>,
    pub version: String,
}

impl Report {
    pub fn new(config: ExperimentConfig, dataset: DatasetSummary, warnings: Vec<Advisory>) -> Self {
        Self {
            config,
            dataset,
            grid: None,
            distributions: Vec::new(),
            interpretability: None,
            timing: None,
            warnings,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json` and the CSV sidecars for every present section.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path).map(std::io::BufWriter::new).map_err(|e| CliError::io(&path, e))
        };
        if let Some(grid) = &self.grid {
            grid.write_csv(create("grid.csv")?)?;
        }
        if !self.distributions.is_empty() {
            oodkit::eval::write_distributions_csv(&self.distributions, create("distributions.csv")?)?;
        }
        if let Some(interp) = &self.interpretability {
            if !interp.split_features.is_empty() {
                let mut w = csv::Writer::from_writer(create("split_rank.csv")?);
                w.write_record(["split_feature", "estimator", "rank", "top_feature"])?;
                for r in &interp.split_features {
                    let top = r.ranking.first().map(|(n, _)| n.as_str()).unwrap_or("");
                    w.write_record([r.split_feature.as_str(), r.estimator.as_str(), &r.rank.to_string(), top])?;
                }
                w.flush().map_err(|e| CliError::io(&dir.join("split_rank.csv"), e))?;
            }
            if !interp.outliers.is_empty() {
                let mut w = csv::Writer::from_writer(create("explanations.csv")?);
                w.write_record(["estimator", "row_id", "score", "rank", "feature", "phi", "value", "in_dist_mean"])?;
                for e in &interp.outliers {
                    for x in &e.explanations {
                        for (k, f) in x.features.iter().enumerate() {
                            w.write_record([
                                e.estimator.as_str(),
                                x.row_id.as_str(),
                                &x.score.to_string(),
                                &(k + 1).to_string(),
                                f.name.as_str(),
                                &f.phi.to_string(),
                                &f.value.text(),
                                &f.in_dist_mean.to_string(),
                            ])?;
                        }
                    }
                }
                w.flush().map_err(|e| CliError::io(&dir.join("explanations.csv"), e))?;
            }
        }
        if let Some(timing) = &self.timing {
            oodkit::bench::write_timing_csv(timing, create("timing.csv")?)?;
        }
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()? + "\n").map_err(|e| CliError::io(&path, e))
    }
}
