use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::schema::{FeatureKind, FeatureSchema};
use super::DataError;

/// A single raw cell. Categorical values are stored as the index into the
/// feature's declared level list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Level(usize),
}

impl Value {
    pub fn as_num(self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(v),
            Value::Level(_) => None,
        }
    }

    pub fn as_level(self) -> Option<usize> {
        match self {
            Value::Level(l) => Some(l),
            Value::Num(_) => None,
        }
    }
}

/// Raw tabular rows conforming to a [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    rows: Vec<Vec<Value>>,
    row_ids: Vec<String>,
}

impl Dataset {
    pub fn new(schema: Arc<FeatureSchema>, rows: Vec<Vec<Value>>, row_ids: Vec<String>) -> Result<Self, DataError> {
        if rows.len() != row_ids.len() {
            return Err(DataError::Shape(format!("{} rows but {} row ids", rows.len(), row_ids.len())));
        }
        let mut seen = HashSet::with_capacity(row_ids.len());
        for id in &row_ids {
            if !seen.insert(id.as_str()) {
                return Err(DataError::Shape(format!("duplicate row id '{id}'")));
            }
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(DataError::Shape(format!(
                    "row {} has {} values, schema has {} features",
                    r + 1,
                    row.len(),
                    schema.len()
                )));
            }
            for (value, feature) in row.iter().zip(schema.features()) {
                let ok = match (&feature.kind, value) {
                    (FeatureKind::Continuous, Value::Num(v)) => v.is_finite(),
                    (FeatureKind::Categorical { levels }, Value::Level(l)) => *l < levels.len(),
                    _ => false,
                };
                if !ok {
                    return Err(DataError::Shape(format!(
                        "row {}, column {}: value {value:?} does not conform to schema",
                        r + 1,
                        feature.name
                    )));
                }
            }
        }
        Ok(Self { schema, rows, row_ids })
    }

    /// Dataset whose row ids are the 0-based row indices.
    pub fn with_index_ids(schema: Arc<FeatureSchema>, rows: Vec<Vec<Value>>) -> Result<Self, DataError> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(schema, rows, ids)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Value] {
        &self.rows[i]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Subset by row indices, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Rows whose id is not in `ids`.
    pub fn without_ids(&self, ids: &HashSet<&str>) -> Dataset {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| !ids.contains(self.row_ids[i].as_str())).collect();
        self.select(&keep)
    }

    /// Concatenate two datasets over the same schema. Row ids must stay unique.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset, DataError> {
        if self.schema != other.schema {
            return Err(DataError::Shape("cannot concatenate datasets with different schemas".into()));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        let mut ids = self.row_ids.clone();
        ids.extend(other.row_ids.iter().cloned());
        Dataset::new(Arc::clone(&self.schema), rows, ids)
    }

    /// Drop one feature (e.g. a downstream label) from schema and rows.
    pub fn drop_feature(&self, name: &str) -> Result<Dataset, DataError> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| DataError::Schema(format!("unknown feature '{name}'")))?;
        let schema = Arc::new(self.schema.without(name)?);
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(j, _)| *j != idx).map(|(_, v)| *v).collect())
            .collect();
        Dataset::new(schema, rows, self.row_ids.clone())
    }

    /// Column of continuous values for feature `j`.
    pub fn continuous_column(&self, j: usize) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r[j].as_num()).collect()
    }

    /// Text form of a cell, as it would appear in CSV.
    pub fn cell_text(&self, row: usize, col: usize) -> String {
        match (self.rows[row][col], &self.schema.features()[col].kind) {
            (Value::Num(v), _) => format_float(v),
            (Value::Level(l), FeatureKind::Categorical { levels }) => levels[l].clone(),
            (Value::Level(l), FeatureKind::Continuous) => l.to_string(),
        }
    }

    /// Writes the dataset as CSV with a leading `id` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend(self.schema.names().map(str::to_string));
        w.write_record(&header).map_err(csv_err)?;
        for r in 0..self.len() {
            let mut record = Vec::with_capacity(self.schema.len() + 1);
            record.push(self.row_ids[r].clone());
            for c in 0..self.schema.len() {
                record.push(self.cell_text(r, c));
            }
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|e| DataError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_err(e: csv::Error) -> DataError {
    DataError::Io(e.to_string())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    let s = format!("{v}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Reads a CSV whose header names exactly the schema's features (any order),
/// plus an optional `id` column.
pub fn read_dataset<R: Read>(reader: R, schema: Arc<FeatureSchema>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();

    let mut id_col = None;
    let mut col_of_feature: HashMap<&str, usize> = HashMap::new();
    for (c, name) in header.iter().enumerate() {
        if name == "id" && schema.index_of("id").is_none() {
            id_col = Some(c);
            continue;
        }
        if schema.index_of(name).is_none() {
            return Err(DataError::Load(format!("unknown column '{name}'")));
        }
        if col_of_feature.insert(name.as_str(), c).is_some() {
            return Err(DataError::Load(format!("duplicate column '{name}'")));
        }
    }
    for f in schema.features() {
        if !col_of_feature.contains_key(f.name.as_str()) {
            return Err(DataError::Load(format!("missing column '{}'", f.name)));
        }
    }
    let cols: Vec<usize> = schema.features().iter().map(|f| col_of_feature[f.name.as_str()]).collect();

    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row_no = r + 1;
        let record = record.map_err(|e| DataError::Load(format!("row {row_no}: {e}")))?;
        let mut row = Vec::with_capacity(schema.len());
        for (feature, &c) in schema.features().iter().zip(&cols) {
            let cell = record.get(c).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(DataError::Load(format!("row {row_no}, column {}: missing value", feature.name)));
            }
            let value = match &feature.kind {
                FeatureKind::Continuous => {
                    let v: f64 = cell.parse().map_err(|_| {
                        DataError::Load(format!("row {row_no}, column {}: cannot parse '{cell}' as a number", feature.name))
                    })?;
                    if !v.is_finite() {
                        return Err(DataError::Load(format!(
                            "row {row_no}, column {}: non-finite value '{cell}'",
                            feature.name
                        )));
                    }
                    Value::Num(v)
                }
                FeatureKind::Categorical { levels } => {
                    let l = levels.iter().position(|lv| lv == cell).ok_or_else(|| {
                        DataError::Load(format!(
                            "row {row_no}, column {}: level '{cell}' not in {{{}}}",
                            feature.name,
                            levels.join(",")
                        ))
                    })?;
                    Value::Level(l)
                }
            };
            row.push(value);
        }
        rows.push(row);
        ids.push(match id_col {
            Some(c) => record.get(c).unwrap_or("").trim().to_string(),
            None => r.to_string(),
        });
    }
    if id_col.is_some() {
        if let Some(pos) = ids.iter().position(|id| id.is_empty()) {
            return Err(DataError::Load(format!("row {}, column id: missing value", pos + 1)));
        }
    }
    Dataset::new(schema, rows, ids).map_err(|e| DataError::Load(e.to_string()))
}

/// Loads a dataset from a CSV file and a JSON schema file.
pub fn load_dataset(csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let schema = Arc::new(FeatureSchema::from_json_file(schema_path)?);
    load_dataset_with_schema(csv_path, schema)
}

pub fn load_dataset_with_schema(csv_path: impl AsRef<Path>, schema: Arc<FeatureSchema>) -> Result<Dataset, DataError> {
    let path = csv_path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(file), schema)
}
