//! Tabular ingestion, encoding, splitting and OOD-group construction.

mod dataset;
mod encoding;
mod groups;
mod predicate;
mod schema;
mod split;
mod synthetic;

pub use dataset::{format_float, load_dataset, load_dataset_with_schema, read_dataset, Dataset, Value};
pub use encoding::{ColumnBlock, EncodedMatrix, Encoding};
pub use groups::{build_ood_group, withhold_group, OodGroup, Provenance};
pub use predicate::{CmpOp, Predicate};
pub use schema::{Feature, FeatureKind, FeatureSchema};
pub use split::{apportion, split, SplitSpec};
pub use synthetic::{generate_synthetic, synthetic_law, SyntheticLaw, SyntheticSpec};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("load error: {0}")]
    Load(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("dataset error: {0}")]
    Shape(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("predicate error: {0}")]
    Predicate(String),
    #[error("group error: {0}")]
    Group(String),
    #[error("synthetic spec error: {0}")]
    Synthetic(String),
}
