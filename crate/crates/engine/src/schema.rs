//! Table schemas: column kinds, index declarations, and validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{AttributeValue, KeyValue, Record, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Int64,
    Float64,
    String,
    Timestamp,
    Vector { dim: usize },
    Geometry,
    Text,
    Blob,
}

impl ColumnKind {
    pub fn name(&self) -> &'static str {
        match self {
            ColumnKind::Int64 => "int64",
            ColumnKind::Float64 => "float64",
            ColumnKind::String => "string",
            ColumnKind::Timestamp => "timestamp",
            ColumnKind::Vector { .. } => "vector",
            ColumnKind::Geometry => "geometry",
            ColumnKind::Text => "text",
            ColumnKind::Blob => "blob",
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(
            self,
            ColumnKind::Int64 | ColumnKind::Float64 | ColumnKind::String | ColumnKind::Timestamp
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Btree,
    Ivf { n_centroids: usize },
    Spatial,
    Inverted,
}

impl IndexKind {
    pub fn name(&self) -> &'static str {
        match self {
            IndexKind::Btree => "btree",
            IndexKind::Ivf { .. } => "ivf",
            IndexKind::Spatial => "spatial",
            IndexKind::Inverted => "inverted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSpec {
    pub column: String,
    pub kind: IndexKind,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, String>,
}

impl IndexSpec {
    pub fn new(column: &str, kind: IndexKind) -> Self {
        IndexSpec {
            column: column.to_string(),
            kind,
            params: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub table_name: String,
    pub columns: Vec<ColumnDef>,
    pub primary_key: String,
    #[serde(default)]
    pub index_specs: Vec<IndexSpec>,
}

impl TableSchema {
    pub fn new(name: &str) -> Self {
        TableSchema {
            table_name: name.to_string(),
            columns: Vec::new(),
            primary_key: String::new(),
            index_specs: Vec::new(),
        }
    }

    pub fn column(mut self, name: &str, kind: ColumnKind) -> Self {
        self.columns.push(ColumnDef {
            name: name.to_string(),
            kind,
        });
        self
    }

    pub fn primary_key(mut self, name: &str) -> Self {
        self.primary_key = name.to_string();
        self
    }

    pub fn index(mut self, column: &str, kind: IndexKind) -> Self {
        self.index_specs.push(IndexSpec::new(column, kind));
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_kind(&self, name: &str) -> Option<ColumnKind> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.kind)
    }

    pub fn index_for_column(&self, name: &str) -> Option<&IndexSpec> {
        self.index_specs.iter().find(|s| s.column == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.table_name.is_empty() {
            return Err(Error::InvalidSchema("empty table name".into()));
        }
        if self.columns.is_empty() {
            return Err(Error::InvalidSchema("table has no columns".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate column `{}`", col.name)));
            }
            if let ColumnKind::Vector { dim } = col.kind {
                if dim == 0 {
                    return Err(Error::InvalidSchema(format!(
                        "vector column `{}` must declare dim >= 1",
                        col.name
                    )));
                }
            }
        }
        let pk_kind = self
            .column_kind(&self.primary_key)
            .ok_or_else(|| Error::InvalidSchema(format!("primary key `{}` is not a column", self.primary_key)))?;
        if !matches!(pk_kind, ColumnKind::Int64 | ColumnKind::String) {
            return Err(Error::InvalidSchema(format!(
                "primary key `{}` must be int64 or string, got {}",
                self.primary_key,
                pk_kind.name()
            )));
        }
        let mut indexed = std::collections::HashSet::new();
        for spec in &self.index_specs {
            if !indexed.insert(spec.column.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "more than one index on column `{}`",
                    spec.column
                )));
            }
            let kind = self
                .column_kind(&spec.column)
                .ok_or_else(|| Error::UnknownColumn(spec.column.clone()))?;
            let ok = match spec.kind {
                IndexKind::Btree => kind.is_scalar(),
                IndexKind::Ivf { n_centroids } => {
                    if n_centroids == 0 {
                        return Err(Error::InvalidSchema(format!(
                            "ivf index on `{}` must declare n_centroids >= 1",
                            spec.column
                        )));
                    }
                    matches!(kind, ColumnKind::Vector { .. })
                }
                IndexKind::Spatial => kind == ColumnKind::Geometry,
                IndexKind::Inverted => kind == ColumnKind::Text,
            };
            if !ok {
                return Err(Error::IndexKindMismatch {
                    index: spec.kind.name(),
                    column: spec.column.clone(),
                    kind: kind.name(),
                });
            }
        }
        Ok(())
    }

    /// Validate a record against the schema, producing a storage row with
    /// values aligned to column order. The primary key column may be given
    /// either as `record.key` alone or redundantly in the attribute map.
    pub fn record_to_row(&self, record: &Record, seqno: u64) -> Result<Row> {
        let pk_kind = self.column_kind(&self.primary_key).expect("validated schema");
        match (&record.key, pk_kind) {
            (KeyValue::Int(_), ColumnKind::Int64) | (KeyValue::Str(_), ColumnKind::String) => {}
            _ => {
                return Err(Error::SchemaViolation {
                    column: self.primary_key.clone(),
                    reason: "primary key value kind does not match column kind".into(),
                })
            }
        }
        let mut values = Vec::with_capacity(self.columns.len());
        for col in &self.columns {
            if col.name == self.primary_key {
                values.push(match &record.key {
                    KeyValue::Int(v) => AttributeValue::Int(*v),
                    KeyValue::Str(s) => AttributeValue::Str(s.clone()),
                });
                continue;
            }
            let value = record.attrs.get(&col.name).cloned().unwrap_or(AttributeValue::Null);
            values.push(check_value(&col.name, col.kind, value)?);
        }
        for name in record.attrs.keys() {
            if self.column_index(name).is_none() {
                return Err(Error::UnknownColumn(name.clone()));
            }
        }
        Ok(Row {
            key: record.key.clone(),
            seqno,
            tombstone: false,
            values,
        })
    }
}

fn check_value(column: &str, kind: ColumnKind, value: AttributeValue) -> Result<AttributeValue> {
    if value.is_null() {
        return Ok(value);
    }
    let ok = match (kind, &value) {
        (ColumnKind::Int64, AttributeValue::Int(_)) => true,
        (ColumnKind::Float64, AttributeValue::Float(_)) => true,
        (ColumnKind::Float64, AttributeValue::Int(_)) => {
            // ints coerce into float columns
            return Ok(AttributeValue::Float(value.as_f64().unwrap()));
        }
        (ColumnKind::Timestamp, AttributeValue::Int(_)) => true,
        (ColumnKind::String, AttributeValue::Str(_)) => true,
        (ColumnKind::Text, AttributeValue::Str(_)) => true,
        (ColumnKind::Vector { dim }, AttributeValue::Vector(v)) => {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    column: column.to_string(),
                    expected: dim,
                    got: v.len(),
                });
            }
            true
        }
        (ColumnKind::Geometry, AttributeValue::Geometry(g)) => {
            g.validate()?;
            true
        }
        (ColumnKind::Blob, AttributeValue::Blob(_)) => true,
        _ => false,
    };
    if ok {
        Ok(value)
    } else {
        Err(Error::SchemaViolation {
            column: column.to_string(),
            reason: format!("value does not match column kind {}", kind.name()),
        })
    }
}
