use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Kind of a raw (pre-encoding) feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl Feature {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: FeatureKind::Continuous }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical { levels: levels.into_iter().map(Into::into).collect() },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Continuous => None,
        }
    }
}

/// Ordered list of raw features. This is the contract shared by ingestion,
/// encoding and attribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

#[derive(Deserialize)]
struct RawSchema {
    features: Vec<Feature>,
}

impl<'de> Deserialize<'de> for FeatureSchema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawSchema::deserialize(deserializer)?;
        FeatureSchema::new(raw.features).map_err(serde::de::Error::custom)
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for f in &features {
            if f.name.trim().is_empty() {
                return Err(DataError::Schema("feature names must be non-empty".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate feature name '{}'", f.name)));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.len() < 2 {
                    return Err(DataError::Schema(format!(
                        "categorical feature '{}' needs at least 2 levels",
                        f.name
                    )));
                }
                let distinct: HashSet<&str> = levels.iter().map(String::as_str).collect();
                if distinct.len() != levels.len() {
                    return Err(DataError::Schema(format!(
                        "categorical feature '{}' has repeated levels",
                        f.name
                    )));
                }
            }
        }
        if features.is_empty() {
            return Err(DataError::Schema("schema has no features".into()));
        }
        Ok(Self { features })
    }

    pub fn from_json_str(text: &str) -> Result<Self, DataError> {
        serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn n_categorical(&self) -> usize {
        self.features.iter().filter(|f| f.is_categorical()).count()
    }

    pub fn n_continuous(&self) -> usize {
        self.len() - self.n_categorical()
    }

    /// Schema with one feature removed; used to strip a label column.
    pub fn without(&self, name: &str) -> Result<Self, DataError> {
        let features: Vec<Feature> = self.features.iter().filter(|f| f.name != name).cloned().collect();
        if features.len() == self.features.len() {
            return Err(DataError::Schema(format!("unknown feature '{name}'")));
        }
        Self::new(features)
    }
}
