use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{auc_roc, EvalError};
use crate::data::EncodedMatrix;
use crate::estimators::{fit, EstimatorConfig, FittedEstimator};

/// An estimator configuration under a report name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimator {
    pub name: String,
    pub config: EstimatorConfig,
}

impl NamedEstimator {
    pub fn new(name: impl Into<String>, config: EstimatorConfig) -> Self {
        Self { name: name.into(), config }
    }

    /// Named after the estimator's default label.
    pub fn labelled(config: EstimatorConfig) -> Self {
        Self { name: config.label().to_string(), config }
    }
}

/// An encoded OOD group.
#[derive(Debug, Clone)]
pub struct EncodedGroup {
    pub name: String,
    pub data: EncodedMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub estimator: String,
    pub group: String,
    pub aucs: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation across trials.
    pub std: f64,
    pub n_trials: usize,
}

impl AucResult {
    pub fn from_trials(estimator: &str, group: &str, aucs: Vec<f64>) -> Self {
        let n = aucs.len() as f64;
        // Centered on the first trial so identical trials give exactly zero spread.
        let first = aucs.first().copied().unwrap_or(0.0);
        let mean = first + aucs.iter().map(|a| a - first).sum::<f64>() / n;
        let std = (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { estimator: estimator.into(), group: group.into(), n_trials: aucs.len(), aucs, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialError {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum GridCell {
    Ok(AucResult),
    Failed { estimator: String, group: String, errors: Vec<TrialError> },
}

impl GridCell {
    pub fn estimator(&self) -> &str {
        match self {
            GridCell::Ok(r) => &r.estimator,
            GridCell::Failed { estimator, .. } => estimator,
        }
    }

    pub fn group(&self) -> &str {
        match self {
            GridCell::Ok(r) => &r.group,
            GridCell::Failed { group, .. } => group,
        }
    }

    pub fn result(&self) -> Option<&AucResult> {
        match self {
            GridCell::Ok(r) => Some(r),
            GridCell::Failed { .. } => None,
        }
    }
}

/// Test and group scores from one fitted estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortScores {
    pub test: Vec<f64>,
    pub groups: Vec<(String, Vec<f64>)>,
}

/// AUC results over (estimator x OOD group); cells are estimator-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    pub estimators: Vec<NamedEstimator>,
    pub groups: Vec<String>,
    pub trial_seeds: Vec<u64>,
    pub cells: Vec<GridCell>,
    /// Scores from the first trial per estimator, kept for distribution summaries.
    #[serde(skip)]
    pub first_trial_scores: BTreeMap<String, CohortScores>,
}

impl EvaluationGrid {
    pub fn cell(&self, estimator: &str, group: &str) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.estimator() == estimator && c.group() == group)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| matches!(c, GridCell::Failed { .. }))
    }

    /// `estimator,group,trial,auc` rows for every successful trial.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["estimator", "group", "trial", "auc"])?;
        for cell in &self.cells {
            if let GridCell::Ok(r) = cell {
                for (t, auc) in r.aucs.iter().enumerate() {
                    w.write_record([r.estimator.as_str(), r.group.as_str(), &t.to_string(), &auc.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct JobOutput {
    scores: CohortScores,
    aucs: Vec<f64>,
}

fn run_job(
    config: &EstimatorConfig,
    train: &EncodedMatrix,
    val: &EncodedMatrix,
    test: &EncodedMatrix,
    groups: &[EncodedGroup],
) -> Result<JobOutput, String> {
    let est: FittedEstimator = fit(config, train, val).map_err(|e| e.to_string())?;
    let test_scores = est.score(test).map_err(|e| e.to_string())?.to_vec();
    let mut scores = CohortScores { test: test_scores, groups: Vec::with_capacity(groups.len()) };
    let mut aucs = Vec::with_capacity(groups.len());
    for g in groups {
        let s = est.score(&g.data).map_err(|e| format!("scoring group '{}': {e}", g.name))?.to_vec();
        aucs.push(auc_roc(&scores.test, &s).map_err(|e| format!("group '{}': {e}", g.name))?);
        scores.groups.push((g.name.clone(), s));
    }
    Ok(JobOutput { scores, aucs })
}

/// Fits every estimator `n_trials` times (trial `t` uses seed `base_seed + t`)
/// on the same split, scoring the test set and every group. Fits run in
/// parallel; a failing fit marks its cells failed without affecting others.
pub fn run_trials(
    estimators: &[NamedEstimator],
    train: &EncodedMatrix,
    val: &EncodedMatrix,
    test: &EncodedMatrix,
    groups: &[EncodedGroup],
    n_trials: usize,
    base_seed: u64,
) -> Result<EvaluationGrid, EvalError> {
    if n_trials == 0 {
        return Err(EvalError::Config("n_trials must be at least 1".into()));
    }
    if test.is_empty() {
        return Err(EvalError::Empty("test set".into()));
    }
    let seeds: Vec<u64> = (0..n_trials as u64).map(|t| base_seed.wrapping_add(t)).collect();
    let jobs: Vec<(usize, usize)> = (0..estimators.len()).flat_map(|e| (0..n_trials).map(move |t| (e, t))).collect();
    let outputs: Vec<Result<JobOutput, String>> = jobs
        .par_iter()
        .map(|&(e, t)| {
            let cfg = estimators[e].config.clone().with_seed(seeds[t]);
            run_job(&cfg, train, val, test, groups)
        })
        .collect();

    let mut cells = Vec::with_capacity(estimators.len() * groups.len());
    let mut first_trial_scores = BTreeMap::new();
    for (e, named) in estimators.iter().enumerate() {
        let results = &outputs[e * n_trials..(e + 1) * n_trials];
        let errors: Vec<TrialError> = results
            .iter()
            .enumerate()
            .filter_map(|(t, r)| r.as_ref().err().map(|msg| TrialError { trial: t, seed: seeds[t], error: msg.clone() }))
            .collect();
        if let Some(Ok(first)) = results.first() {
            first_trial_scores.insert(named.name.clone(), first.scores.clone());
        }
        for (gi, g) in groups.iter().enumerate() {
            cells.push(if errors.is_empty() {
                let aucs = results.iter().map(|r| r.as_ref().map(|o| o.aucs[gi]).expect("no errors")).collect();
                GridCell::Ok(AucResult::from_trials(&named.name, &g.name, aucs))
            } else {
                GridCell::Failed { estimator: named.name.clone(), group: g.name.clone(), errors: errors.clone() }
            });
        }
    }
    Ok(EvaluationGrid {
        estimators: estimators.to_vec(),
        groups: groups.iter().map(|g| g.name.clone()).collect(),
        trial_seeds: seeds,
        cells,
        first_trial_scores,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::{generate_synthetic, Encoding, SyntheticSpec};
    use crate::estimators::EstimatorKind;

    fn setup() -> (EncodedMatrix, EncodedMatrix, EncodedMatrix, Vec<EncodedGroup>) {
        let mut spec = SyntheticSpec::null(300, 4, vec![], 1, 9);
        spec.n_shifted = Some(60);
        spec.shift = vec![4.0, 0.0, 0.0, 0.0];
        let (data, shifted) = generate_synthetic(&spec).unwrap();
        let enc = Arc::new(Encoding::fit(&data).unwrap());
        let all = enc.encode(&data).unwrap();
        let idx: Vec<usize> = (0..300).collect();
        let group = EncodedGroup { name: "shifted".into(), data: enc.encode(&shifted).unwrap() };
        (all.select(&idx[..200]), all.select(&idx[200..240]), all.select(&idx[240..]), vec![group])
    }

    #[test]
    fn deterministic_estimators_have_zero_spread() {
        let (train, val, test, groups) = setup();
        let ests = vec![
            NamedEstimator::new("PPCA", EstimatorConfig::new(EstimatorKind::Ppca { q: 2 })),
            NamedEstimator::labelled(EstimatorConfig::lof()),
        ];
        let grid = run_trials(&ests, &train, &val, &test, &groups, 3, 10).unwrap();
        assert_eq!(grid.trial_seeds, vec![10, 11, 12]);
        for cell in &grid.cells {
            let r = cell.result().unwrap();
            assert_eq!(r.n_trials, 3);
            assert_eq!(r.std, 0.0);
            assert!(r.mean > 0.9, "{} {}", r.estimator, r.mean);
        }
        let single = run_trials(&ests, &train, &val, &test, &groups, 1, 0).unwrap();
        assert!(single.cells.iter().all(|c| c.result().unwrap().std == 0.0));
    }

    #[test]
    fn failed_fit_is_recorded_and_isolated() {
        let (train, val, test, groups) = setup();
        let ests = vec![
            NamedEstimator::new("bad", EstimatorConfig::new(EstimatorKind::Ppca { q: 40 })),
            NamedEstimator::labelled(EstimatorConfig::lof()),
        ];
        let grid = run_trials(&ests, &train, &val, &test, &groups, 2, 0).unwrap();
        assert_eq!(grid.cells.len(), 2);
        assert!(matches!(grid.cell("bad", "shifted"), Some(GridCell::Failed { errors, .. }) if errors.len() == 2));
        assert!(grid.cell("LOF", "shifted").unwrap().result().is_some());
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("estimator,group,trial,auc\n"));
    }

    #[test]
    fn population_std() {
        let r = AucResult::from_trials("x", "g", vec![0.5, 0.7]);
        assert!((r.mean - 0.6).abs() < 1e-15);
        assert!((r.std - 0.1).abs() < 1e-12);
    }
}
