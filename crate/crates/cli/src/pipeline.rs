//! Loads the configured data, carves out OOD groups, splits and encodes.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use ndarray::{concatenate, Axis};
use oodkit::data::{
    build_ood_group, generate_synthetic, load_dataset, load_dataset_with_schema, split, withhold_group, Dataset,
    EncodedMatrix, Encoding, FeatureKind, OodGroup, Predicate, Provenance,
};
use oodkit::eval::EncodedGroup;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::advisories::DataStats;
use crate::config::{resolve, DataSource, ExperimentConfig, GroupSource};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub provenance: Provenance,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub features: usize,
    pub continuous: usize,
    pub categorical: usize,
    /// SHA-256 of the dataset serialized as CSV.
    pub sha256: String,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
    pub groups: Vec<GroupSummary>,
}

/// Class labels of the test rows, for per-class score distributions.
#[derive(Debug, Clone)]
pub struct TestLabels {
    pub column: String,
    pub levels: Vec<String>,
    pub per_row: Vec<usize>,
}

struct LabelInfo {
    column: String,
    levels: Vec<String>,
    by_id: HashMap<String, usize>,
    minority: f64,
}

pub struct Prepared {
    /// In-distribution cohort (predicate groups and label column removed),
    /// before splitting.
    pub cohort: Dataset,
    pub train: EncodedMatrix,
    pub val: EncodedMatrix,
    pub test: EncodedMatrix,
    pub groups: Vec<EncodedGroup>,
    pub summary: DatasetSummary,
    pub stats: DataStats,
    pub test_labels: Option<TestLabels>,
}

pub fn fingerprint(data: &Dataset) -> Result<String, CliError> {
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

/// The configured dataset and, for synthetic sources, its shifted cohort.
pub fn load(cfg: &ExperimentConfig, base: &Path) -> Result<(Dataset, Option<Dataset>), CliError> {
    match &cfg.data {
        DataSource::Files { csv, schema } => Ok((load_dataset(resolve(base, csv), resolve(base, schema))?, None)),
        DataSource::Synthetic(spec) => {
            let (data, shifted) = generate_synthetic(spec)?;
            Ok((data, Some(shifted)))
        }
    }
}

fn drop_label(data: &Dataset, label: Option<&str>) -> Result<Dataset, CliError> {
    match label {
        Some(l) => Ok(data.drop_feature(l)?),
        None => Ok(data.clone()),
    }
}

pub fn prepare(cfg: &ExperimentConfig, base: &Path) -> Result<Prepared, CliError> {
    let (raw, shifted) = load(cfg, base)?;
    cfg.validate_against(raw.schema())?;
    let sha256 = fingerprint(&raw)?;

    let labels: Option<LabelInfo> = match &cfg.label_column {
        None => None,
        Some(col) => {
            let j = raw
                .schema()
                .index_of(col)
                .ok_or_else(|| CliError::Config(format!("unknown label column '{col}'")))?;
            let FeatureKind::Categorical { levels } = &raw.schema().features()[j].kind else {
                return Err(CliError::Config(format!("label column '{col}' must be categorical")));
            };
            if levels.len() != 2 {
                return Err(CliError::Config(format!("label column '{col}' must have 2 levels, has {}", levels.len())));
            }
            let by_id: HashMap<String, usize> = (0..raw.len())
                .map(|i| (raw.row_ids()[i].clone(), raw.row(i)[j].as_level().expect("categorical")))
                .collect();
            let ones = by_id.values().filter(|&&l| l == 1).count() as f64;
            let minority = ones.min(raw.len() as f64 - ones) / raw.len() as f64;
            Some(LabelInfo { column: col.clone(), levels: levels.clone(), by_id, minority })
        }
    };
    let data = drop_label(&raw, cfg.label_column.as_deref())?;
    let schema = data.schema_arc().clone();

    let mut cohort = data.clone();
    let mut raw_groups: Vec<Option<OodGroup>> = Vec::new();
    let mut withheld: Vec<(usize, Predicate)> = Vec::new();
    for (gi, g) in cfg.groups.iter().enumerate() {
        match &g.source {
            GroupSource::Predicate(text) => {
                let p = Predicate::parse(text, &schema)?;
                let group = build_ood_group(&cohort, &p, &g.name)?;
                let ids: HashSet<&str> = group.data.row_ids().iter().map(String::as_str).collect();
                cohort = cohort.without_ids(&ids);
                raw_groups.push(Some(group));
            }
            GroupSource::Withhold(text) => {
                // Filled in once the training split exists.
                withheld.push((gi, Predicate::parse(text, &schema)?));
                raw_groups.push(None);
            }
            GroupSource::Csv(path) => {
                let full = load_dataset_with_schema(resolve(base, path), Arc::clone(raw.schema_arc()))?;
                let d = drop_label(&full, cfg.label_column.as_deref())?;
                raw_groups.push(Some(OodGroup::external(&g.name, path, d)?));
            }
            GroupSource::SyntheticShifted(_) => {
                let d = shifted.as_ref().ok_or_else(|| CliError::Config("no synthetic shifted cohort".into()))?;
                let d = drop_label(d, cfg.label_column.as_deref())?;
                raw_groups.push(Some(OodGroup::external(&g.name, "synthetic shifted cohort", d)?));
            }
        }
    }
    if cohort.is_empty() {
        return Err(CliError::Config("group predicates exclude every row".into()));
    }

    let (mut train, mut val, test) = split(&cohort, &cfg.split)?;
    for (gi, p) in withheld {
        let name = &cfg.groups[gi].name;
        let (reduced, group) = withhold_group(&train, &p, name)?;
        train = reduced;
        let ids: HashSet<&str> =
            (0..val.len()).filter(|&i| p.eval(val.row(i))).map(|i| val.row_ids()[i].as_str()).collect();
        val = val.without_ids(&ids);
        raw_groups[gi] = Some(group);
    }
    let raw_groups: Vec<OodGroup> = raw_groups.into_iter().map(|g| g.expect("every group built")).collect();

    let enc = Arc::new(Encoding::fit(&train)?);
    let groups = raw_groups
        .iter()
        .map(|g| Ok(EncodedGroup { name: g.name.clone(), data: enc.encode(&g.data)? }))
        .collect::<Result<Vec<_>, CliError>>()?;

    let test_labels = labels.as_ref().map(|l| TestLabels {
        column: l.column.clone(),
        levels: l.levels.clone(),
        per_row: test.row_ids().iter().map(|id| l.by_id[id]).collect(),
    });
    let stats = DataStats {
        n_continuous: data.schema().n_continuous(),
        n_categorical: data.schema().n_categorical(),
        encoded_dim: enc.dim(),
        n_train: train.len(),
        label_minority_fraction: labels.as_ref().map(|l| l.minority),
    };
    let summary = DatasetSummary {
        rows: raw.len(),
        features: raw.schema().len(),
        continuous: raw.schema().n_continuous(),
        categorical: raw.schema().n_categorical(),
        sha256,
        train_rows: train.len(),
        val_rows: val.len(),
        test_rows: test.len(),
        groups: raw_groups
            .iter()
            .map(|g| GroupSummary { name: g.name.clone(), provenance: g.provenance.clone(), rows: g.len() })
            .collect(),
    };
    Ok(Prepared {
        cohort,
        train: enc.encode(&train)?,
        val: enc.encode(&val)?,
        test: enc.encode(&test)?,
        groups,
        summary,
        stats,
        test_labels,
    })
}

/// Stacks the rows of every group, prefixing row ids with the group name.
pub fn stack_groups(groups: &[EncodedGroup]) -> Option<EncodedMatrix> {
    let first = groups.first()?;
    let views: Vec<_> = groups.iter().map(|g| g.data.values.view()).collect();
    Some(EncodedMatrix {
        values: concatenate(Axis(0), &views).expect("groups share the encoding width"),
        encoding: Arc::clone(&first.data.encoding),
        row_ids: groups.iter().flat_map(|g| g.data.row_ids.iter().map(move |id| format!("{}/{id}", g.name))).collect(),
    })
}
