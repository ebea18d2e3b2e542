//! One function per subcommand. Each computes everything first and writes
//! its outputs at the end.

use std::path::{Path, PathBuf};

use ndarray::s;
use oodkit::attribution::{explain_outliers, split_feature_rank};
use oodkit::bench::{benchmark, BenchSettings};
use oodkit::data::{load_dataset_with_schema, Predicate};
use oodkit::estimators::{fit, FittedEstimator};
use oodkit::eval::{run_trials, score_distribution, NamedEstimator};
use rayon::prelude::*;

use crate::advisories::validate_advisories;
use crate::config::{DataSource, ExperimentConfig};
use crate::pipeline::{prepare, stack_groups, Prepared};
use crate::report::{EstimatorExplanations, Interpretability, Report};
use crate::CliError;

/// A loaded config plus where its relative paths are anchored.
pub struct Context {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

impl Context {
    pub fn out_dir(&self) -> PathBuf {
        crate::config::resolve(&self.base, &self.config.output_dir)
    }
}

fn start(ctx: &Context) -> Result<(Prepared, Report), CliError> {
    ctx.config.validate()?;
    let prepared = prepare(&ctx.config, &ctx.base)?;
    let warnings = validate_advisories(&ctx.config.named_estimators()?, &prepared.stats);
    for w in &warnings {
        eprintln!("warning [{}]: {}", w.code, w.message);
    }
    let report = Report::new(ctx.config.clone(), prepared.summary.clone(), warnings);
    Ok((prepared, report))
}

fn require_estimators(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.estimators.is_empty() {
        return Err(CliError::Config("config lists no estimators".into()));
    }
    Ok(())
}

/// Writes the synthetic dataset, its schema and (when the synthetic spec shifts
/// anything) the shifted cohort. Returns the written paths.
pub fn cmd_synth(ctx: &Context, name: &str) -> Result<Vec<PathBuf>, CliError> {
    let DataSource::Synthetic(spec) = &ctx.config.data else {
        return Err(CliError::Config("synth needs a synthetic data source".into()));
    };
    spec.validate()?;
    let (data, shifted) = oodkit::data::generate_synthetic(spec)?;
    let dir = ctx.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut written = vec![dir.join(format!("{name}.csv")), dir.join(format!("{name}.schema.json"))];
    data.write_csv_file(&written[0])?;
    std::fs::write(&written[1], data.schema().to_json_string() + "\n").map_err(|e| CliError::io(&written[1], e))?;
    if spec.shift.iter().any(|&s| s != 0.0) || spec.flip_prob > 0.0 {
        let path = dir.join(format!("{name}_shifted.csv"));
        shifted.write_csv_file(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Fits every configured estimator on the training split with the run seed
/// and saves each under `models/<name>.json`.
pub fn cmd_fit(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    require_estimators(&ctx.config)?;
    let (prepared, _) = start(ctx)?;
    let fitted = fit_all(&ctx.config, &prepared)?;
    let dir = ctx.out_dir().join("models");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut paths = Vec::new();
    for (name, est) in &fitted {
        let path = dir.join(format!("{name}.json"));
        est.save(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

fn fit_all(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<(String, FittedEstimator)>, CliError> {
    fit_named(&cfg.named_estimators()?, cfg.seed, prepared)
}

fn fit_named(
    estimators: &[(String, oodkit::estimators::EstimatorConfig)],
    seed: u64,
    prepared: &Prepared,
) -> Result<Vec<(String, FittedEstimator)>, CliError> {
    estimators
        .par_iter()
        .map(|(name, c)| {
            let est = fit(&c.clone().with_seed(seed), &prepared.train, &prepared.val)
                .map_err(|e| CliError::Run(format!("fitting {name}: {e}")))?;
            Ok((name.clone(), est))
        })
        .collect()
}

/// Scores a CSV (with the model's feature columns) and writes `id,score`.
pub fn cmd_score(model: &Path, input: &Path, output: &Path) -> Result<usize, CliError> {
    let est = FittedEstimator::load(model)?;
    let schema = std::sync::Arc::new(est.encoding.schema().clone());
    let data = load_dataset_with_schema(input, schema)?;
    let x = est.encoding.encode(&data)?;
    let scores = est.score(&x)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(output)?;
    w.write_record(["id", "score"])?;
    for (id, s) in x.row_ids.iter().zip(scores.iter()) {
        w.write_record([id.as_str(), &s.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(output, e))?;
    Ok(x.nrows())
}

fn evaluate_into(ctx: &Context, prepared: &Prepared, report: &mut Report) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let named: Vec<NamedEstimator> =
        cfg.named_estimators()?.into_iter().map(|(n, c)| NamedEstimator::new(n, c)).collect();
    let grid = run_trials(&named, &prepared.train, &prepared.val, &prepared.test, &prepared.groups, cfg.n_trials, cfg.seed)?;

    let mut distributions = Vec::new();
    let per_class = report.warnings.iter().any(|w| w.code == "label_imbalance");
    for e in &named {
        let Some(scores) = grid.first_trial_scores.get(&e.name) else { continue };
        let mut cohorts = scores.groups.clone();
        if let (true, Some(labels)) = (per_class, &prepared.test_labels) {
            for (l, level) in labels.levels.iter().enumerate() {
                let s: Vec<f64> =
                    scores.test.iter().zip(&labels.per_row).filter(|(_, &c)| c == l).map(|(v, _)| *v).collect();
                if !s.is_empty() {
                    cohorts.push((format!("test:{}={level}", labels.column), s));
                }
            }
        }
        distributions.extend(score_distribution(&e.name, &scores.test, &cohorts, cfg.bins)?);
    }
    report.grid = Some(grid);
    report.distributions = distributions;
    Ok(())
}

fn explain_into(ctx: &Context, prepared: &Prepared, report: &mut Report) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let Some(attr) = &cfg.attribution else {
        return Err(CliError::Config("config has no attribution section".into()));
    };
    let estimators = cfg.attribution_estimators()?;
    if estimators.is_empty() {
        return Err(CliError::Config("no estimators selected for attribution".into()));
    }
    let mut interp = Interpretability::default();
    let settings = attr.split_rank_settings(cfg.split);
    for test in &attr.split_features {
        let predicate = Predicate::parse(&test.predicate, prepared.cohort.schema())?;
        for (name, c) in &estimators {
            let mut r = split_feature_rank(&prepared.cohort, &test.feature, &predicate, c, &settings, cfg.seed)?;
            r.estimator = name.clone();
            interp.split_features.push(r);
        }
    }
    if let Some(o) = &attr.outliers {
        let cohort = stack_groups(&prepared.groups).unwrap_or_else(|| prepared.test.clone());
        let fitted = fit_named(&estimators, cfg.seed, prepared)?;
        for (name, est) in &fitted {
            let top_n = o.top_n.min(cohort.nrows());
            let explanations =
                explain_outliers(est, &cohort, &prepared.train, top_n, o.top_k, attr.n_coalitions, cfg.seed)?;
            interp.outliers.push(EstimatorExplanations { estimator: name.clone(), explanations });
        }
    }
    report.interpretability = Some(interp);
    Ok(())
}

fn bench_into(ctx: &Context, prepared: &Prepared, report: &mut Report) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let b = cfg.bench.clone().unwrap_or_default();
    if prepared.test.is_empty() {
        return Err(CliError::Config("benchmark needs at least one test row".into()));
    }
    let fitted = fit_all(cfg, prepared)?;
    let sample = prepared.test.values.slice(s![0..1, ..]).to_owned();
    let settings = BenchSettings { n_inference: b.n_inference, n_shap: b.n_shap, n_coalitions: b.n_coalitions, seed: cfg.seed };
    report.timing = Some(benchmark(&fitted, &sample, &prepared.train.values, &settings)?);
    Ok(())
}

/// Runs the evaluation grid and score distributions, plus the attribution
/// and benchmark sections when configured.
pub fn cmd_evaluate(ctx: &Context) -> Result<Report, CliError> {
    require_estimators(&ctx.config)?;
    if ctx.config.groups.is_empty() {
        return Err(CliError::Config("evaluate needs at least one OOD group".into()));
    }
    let (prepared, mut report) = start(ctx)?;
    evaluate_into(ctx, &prepared, &mut report)?;
    if ctx.config.attribution.is_some() {
        explain_into(ctx, &prepared, &mut report)?;
    }
    if ctx.config.bench.is_some() {
        bench_into(ctx, &prepared, &mut report)?;
    }
    Ok(report)
}

pub fn cmd_explain(ctx: &Context) -> Result<Report, CliError> {
    require_estimators(&ctx.config)?;
    let (prepared, mut report) = start(ctx)?;
    explain_into(ctx, &prepared, &mut report)?;
    Ok(report)
}

pub fn cmd_bench(ctx: &Context) -> Result<Report, CliError> {
    require_estimators(&ctx.config)?;
    let (prepared, mut report) = start(ctx)?;
    bench_into(ctx, &prepared, &mut report)?;
    Ok(report)
}
