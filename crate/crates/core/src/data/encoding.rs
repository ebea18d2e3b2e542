use std::ops::Range;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Value};
use super::schema::{FeatureKind, FeatureSchema};
use super::DataError;

/// Encoded-column layout of one raw feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnBlock {
    /// Standardized continuous column.
    Continuous { column: usize, mean: f64, std: f64 },
    /// One-hot block, one column per declared level, in declared order.
    Categorical { start: usize, n_levels: usize },
}

impl ColumnBlock {
    pub fn columns(&self) -> Range<usize> {
        match *self {
            ColumnBlock::Continuous { column, .. } => column..column + 1,
            ColumnBlock::Categorical { start, n_levels } => start..start + n_levels,
        }
    }
}

/// Standardization statistics and one-hot layout fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    schema: FeatureSchema,
    blocks: Vec<ColumnBlock>,
    dim: usize,
}

impl Encoding {
    /// Fits per-continuous mean and population std on `train`.
    pub fn fit(train: &Dataset) -> Result<Self, DataError> {
        if train.is_empty() {
            return Err(DataError::Encoding("cannot fit an encoding on an empty dataset".into()));
        }
        let schema = train.schema().clone();
        let n = train.len() as f64;
        let mut blocks = Vec::with_capacity(schema.len());
        let mut dim = 0;
        for (j, feature) in schema.features().iter().enumerate() {
            match &feature.kind {
                FeatureKind::Continuous => {
                    let col = train.continuous_column(j).expect("schema-conforming dataset");
                    let mean = col.iter().sum::<f64>() / n;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    // Relative test so that large constant values are caught despite rounding.
                    if !(std > 1e-12 * mean.abs().max(1.0)) {
                        return Err(DataError::Encoding(format!("constant feature '{}'", feature.name)));
                    }
                    blocks.push(ColumnBlock::Continuous { column: dim, mean, std });
                    dim += 1;
                }
                FeatureKind::Categorical { levels } => {
                    blocks.push(ColumnBlock::Categorical { start: dim, n_levels: levels.len() });
                    dim += levels.len();
                }
            }
        }
        Ok(Self { schema, blocks, dim })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn blocks(&self) -> &[ColumnBlock] {
        &self.blocks
    }

    /// Total encoded dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Encoded column range of every raw feature, in schema order.
    pub fn feature_columns(&self) -> Vec<Range<usize>> {
        self.blocks.iter().map(ColumnBlock::columns).collect()
    }

    pub fn encode_row(&self, row: &[Value], out: &mut [f64]) -> Result<(), DataError> {
        if row.len() != self.blocks.len() || out.len() != self.dim {
            return Err(DataError::Encoding("row does not match encoding layout".into()));
        }
        for (block, value) in self.blocks.iter().zip(row) {
            match (block, value) {
                (ColumnBlock::Continuous { column, mean, std }, Value::Num(v)) => {
                    out[*column] = (v - mean) / std;
                }
                (ColumnBlock::Categorical { start, n_levels }, Value::Level(l)) if l < n_levels => {
                    out[*start..start + n_levels].iter_mut().for_each(|x| *x = 0.0);
                    out[start + l] = 1.0;
                }
                _ => return Err(DataError::Encoding("row value does not match encoding block".into())),
            }
        }
        Ok(())
    }

    /// Standardizes continuous features and one-hot encodes categoricals.
    pub fn encode(self: &Arc<Self>, dataset: &Dataset) -> Result<EncodedMatrix, DataError> {
        if dataset.schema() != &self.schema {
            return Err(DataError::Encoding("dataset schema differs from the encoding's schema".into()));
        }
        let mut values = Array2::zeros((dataset.len(), self.dim));
        for (i, row) in dataset.rows().iter().enumerate() {
            let mut out = values.row_mut(i);
            self.encode_row(row, out.as_slice_mut().expect("standard layout"))?;
        }
        Ok(EncodedMatrix { values, encoding: Arc::clone(self), row_ids: dataset.row_ids().to_vec() })
    }

    /// Inverse of [`Encoding::encode_row`]: continuous values are de-standardized,
    /// one-hot blocks decode to the arg-max level.
    pub fn decode_row(&self, encoded: &[f64]) -> Vec<Value> {
        self.blocks
            .iter()
            .map(|block| match *block {
                ColumnBlock::Continuous { column, mean, std } => Value::Num(encoded[column] * std + mean),
                ColumnBlock::Categorical { start, n_levels } => {
                    let slice = &encoded[start..start + n_levels];
                    let best = slice
                        .iter()
                        .enumerate()
                        .fold(0, |best, (i, &v)| if v > slice[best] { i } else { best });
                    Value::Level(best)
                }
            })
            .collect()
    }
}

/// Numeric matrix produced by an [`Encoding`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub values: Array2<f64>,
    pub encoding: Arc<Encoding>,
    pub row_ids: Vec<String>,
}

impl EncodedMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn select(&self, indices: &[usize]) -> EncodedMatrix {
        EncodedMatrix {
            values: self.values.select(ndarray::Axis(0), indices),
            encoding: Arc::clone(&self.encoding),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}
