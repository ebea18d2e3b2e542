use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::predicate::Predicate;
use super::DataError;

/// How an OOD cohort was obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "text", rename_all = "lowercase")]
pub enum Provenance {
    /// Rows excluded from the cohort by an eligibility predicate.
    Predicate(String),
    /// Rows removed from the training split.
    Withheld(String),
    /// Rows supplied from a separate source (e.g. a second CSV).
    External(String),
}

/// A named held-out cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct OodGroup {
    pub name: String,
    pub provenance: Provenance,
    pub data: Dataset,
}

impl OodGroup {
    pub fn external(name: impl Into<String>, source: impl Into<String>, data: Dataset) -> Result<Self, DataError> {
        let name = name.into();
        if data.is_empty() {
            return Err(DataError::Group(format!("group '{name}' is empty")));
        }
        Ok(Self { name, provenance: Provenance::External(source.into()), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn matching(pool: &Dataset, predicate: &Predicate) -> Vec<usize> {
    (0..pool.len()).filter(|&i| predicate.eval(pool.row(i))).collect()
}

/// Every pool row satisfying `predicate` becomes an OOD group member.
pub fn build_ood_group(pool: &Dataset, predicate: &Predicate, name: &str) -> Result<OodGroup, DataError> {
    let idx = matching(pool, predicate);
    if idx.is_empty() {
        return Err(DataError::Group(format!("predicate '{predicate}' for group '{name}' selects no rows")));
    }
    Ok(OodGroup {
        name: name.to_string(),
        provenance: Provenance::Predicate(predicate.text().to_string()),
        data: pool.select(&idx),
    })
}

/// Removes the rows matching `predicate` from `train` and returns them as a group.
pub fn withhold_group(train: &Dataset, predicate: &Predicate, name: &str) -> Result<(Dataset, OodGroup), DataError> {
    let idx = matching(train, predicate);
    if idx.is_empty() {
        return Err(DataError::Group(format!("predicate '{predicate}' for group '{name}' withholds no rows")));
    }
    if idx.len() == train.len() {
        return Err(DataError::Group(format!("predicate '{predicate}' for group '{name}' withholds every row")));
    }
    let group = train.select(&idx);
    let ids: HashSet<&str> = group.row_ids().iter().map(String::as_str).collect();
    let reduced = train.without_ids(&ids);
    Ok((
        reduced,
        OodGroup { name: name.to_string(), provenance: Provenance::Withheld(predicate.text().to_string()), data: group },
    ))
}
