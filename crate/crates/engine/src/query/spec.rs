//! Declarative hybrid query model and its JSON wire form.
//!
//! One document per query:
//! `{table, select:[cols], filters:[{kind,...}], rank:{terms:[...],k},
//!   mode:"snapshot"|{"sync_seconds":n}|"async", options:{...}}`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::ScalarKey;
use crate::schema::{ColumnKind, IndexKind, TableSchema};
use crate::value::GeometryValue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarBound {
    Num(f64),
    Str(String),
}

impl ScalarBound {
    pub fn to_key(&self) -> ScalarKey {
        match self {
            ScalarBound::Num(v) => ScalarKey::Float(*v),
            ScalarBound::Str(s) => ScalarKey::Str(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    ScalarRange {
        column: String,
        lo: ScalarBound,
        hi: ScalarBound,
    },
    VectorThreshold {
        column: String,
        query: Vec<f32>,
        threshold: f64,
    },
    SpatialContains {
        column: String,
        region: GeometryValue,
    },
    Keyword {
        column: String,
        term: String,
    },
}

impl Predicate {
    pub fn column(&self) -> &str {
        match self {
            Predicate::ScalarRange { column, .. }
            | Predicate::VectorThreshold { column, .. }
            | Predicate::SpatialContains { column, .. }
            | Predicate::Keyword { column, .. } => column,
        }
    }

    /// Which index kind can serve this predicate.
    pub fn servable_by(&self) -> &'static str {
        match self {
            Predicate::ScalarRange { .. } => "btree",
            Predicate::VectorThreshold { .. } => "ivf",
            Predicate::SpatialContains { .. } => "spatial",
            Predicate::Keyword { .. } => "inverted",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Predicate::ScalarRange { column, .. } => format!("range({column})"),
            Predicate::VectorThreshold { column, .. } => format!("vec_theta({column})"),
            Predicate::SpatialContains { column, .. } => format!("contains({column})"),
            Predicate::Keyword { column, term } => format!("keyword({column},{term})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Vector,
    Spatial,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankQueryValue {
    Vector(Vec<f32>),
    Point([f64; 2]),
    Terms(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTerm {
    pub modality: Modality,
    pub column: String,
    pub query: RankQueryValue,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSpec {
    pub terms: Vec<RankTerm>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModeWire", into = "ModeWire")]
#[derive(Default)]
pub enum QueryMode {
    #[default]
    Snapshot,
    Sync { interval_secs: f64 },
    Async,
}


#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ModeWire {
    Name(String),
    Sync { sync_seconds: f64 },
}

impl TryFrom<ModeWire> for QueryMode {
    type Error = String;

    fn try_from(wire: ModeWire) -> std::result::Result<Self, String> {
        match wire {
            ModeWire::Name(name) => match name.as_str() {
                "snapshot" => Ok(QueryMode::Snapshot),
                "async" => Ok(QueryMode::Async),
                other => Err(format!("unknown mode `{other}`")),
            },
            ModeWire::Sync { sync_seconds } => {
                if sync_seconds <= 0.0 {
                    return Err("sync interval must be positive".into());
                }
                Ok(QueryMode::Sync {
                    interval_secs: sync_seconds,
                })
            }
        }
    }
}

impl From<QueryMode> for ModeWire {
    fn from(mode: QueryMode) -> ModeWire {
        match mode {
            QueryMode::Snapshot => ModeWire::Name("snapshot".into()),
            QueryMode::Async => ModeWire::Name("async".into()),
            QueryMode::Sync { interval_secs } => ModeWire::Sync {
                sync_seconds: interval_secs,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NraMode {
    #[default]
    Refine,
    Faithful,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_probe: Option<usize>,
    #[serde(default)]
    pub nra_mode: NraMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_plan: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub table: String,
    #[serde(default)]
    pub select: Vec<String>,
    #[serde(default)]
    pub filters: Vec<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<RankSpec>,
    #[serde(default)]
    pub mode: QueryMode,
    #[serde(default)]
    pub options: QueryOptions,
}

impl QuerySpec {
    pub fn parse(json: &str) -> Result<QuerySpec> {
        let spec: QuerySpec = serde_json::from_str(json)?;
        Ok(spec)
    }

    pub fn filter_only(table: &str, filters: Vec<Predicate>) -> QuerySpec {
        QuerySpec {
            table: table.to_string(),
            select: Vec::new(),
            filters,
            rank: None,
            mode: QueryMode::Snapshot,
            options: QueryOptions::default(),
        }
    }

    pub fn validate(&self, schema: &TableSchema) -> Result<()> {
        if self.filters.is_empty() && self.rank.is_none() {
            return Err(Error::InvalidQuery(
                "query needs at least one filter or a rank spec".into(),
            ));
        }
        for col in &self.select {
            if schema.column_index(col).is_none() {
                return Err(Error::UnknownColumn(col.clone()));
            }
        }
        for pred in &self.filters {
            let kind = schema
                .column_kind(pred.column())
                .ok_or_else(|| Error::UnknownColumn(pred.column().to_string()))?;
            match pred {
                Predicate::ScalarRange { lo, hi, .. } => {
                    if !kind.is_scalar() {
                        return Err(Error::InvalidQuery(format!(
                            "scalar_range on non-scalar column `{}`",
                            pred.column()
                        )));
                    }
                    if lo.to_key() > hi.to_key() {
                        return Err(Error::InvalidQuery("range lo > hi".into()));
                    }
                }
                Predicate::VectorThreshold { query, threshold, .. } => {
                    let ColumnKind::Vector { dim } = kind else {
                        return Err(Error::InvalidQuery(format!(
                            "vector_threshold on non-vector column `{}`",
                            pred.column()
                        )));
                    };
                    if query.len() != dim {
                        return Err(Error::DimensionMismatch {
                            column: pred.column().to_string(),
                            expected: dim,
                            got: query.len(),
                        });
                    }
                    if !threshold.is_finite() || *threshold < 0.0 {
                        return Err(Error::InvalidQuery("threshold must be >= 0".into()));
                    }
                }
                Predicate::SpatialContains { region, .. } => {
                    if kind != ColumnKind::Geometry {
                        return Err(Error::InvalidQuery(format!(
                            "spatial_contains on non-geometry column `{}`",
                            pred.column()
                        )));
                    }
                    region.validate()?;
                }
                Predicate::Keyword { .. } => {
                    if kind != ColumnKind::Text {
                        return Err(Error::InvalidQuery(format!(
                            "keyword on non-text column `{}`",
                            pred.column()
                        )));
                    }
                }
            }
        }
        if let Some(rank) = &self.rank {
            if rank.terms.is_empty() {
                return Err(Error::InvalidQuery("rank needs at least one term".into()));
            }
            if rank.k == 0 {
                return Err(Error::InvalidQuery("rank k must be >= 1".into()));
            }
            for term in &rank.terms {
                if !term.weight.is_finite() || term.weight < 0.0 {
                    return Err(Error::InvalidQuery("rank weights must be finite and >= 0".into()));
                }
                let kind = schema
                    .column_kind(&term.column)
                    .ok_or_else(|| Error::UnknownColumn(term.column.clone()))?;
                let ok = matches!(
                    (term.modality, kind, &term.query),
                    (Modality::Vector, ColumnKind::Vector { .. }, RankQueryValue::Vector(_))
                        | (Modality::Spatial, ColumnKind::Geometry, RankQueryValue::Point(_))
                        | (Modality::Text, ColumnKind::Text, RankQueryValue::Terms(_))
                );
                if !ok {
                    return Err(Error::InvalidQuery(format!(
                        "rank term on `{}`: modality/column/query mismatch",
                        term.column
                    )));
                }
                if let (Modality::Vector, RankQueryValue::Vector(q)) = (term.modality, &term.query) {
                    if let ColumnKind::Vector { dim } = kind {
                        if q.len() != dim {
                            return Err(Error::DimensionMismatch {
                                column: term.column.clone(),
                                expected: dim,
                                got: q.len(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Does the schema hold an index that can serve this filter?
    pub fn filter_servable(&self, schema: &TableSchema, filter_idx: usize) -> Option<IndexKind> {
        let pred = self.filters.get(filter_idx)?;
        let spec = schema.index_for_column(pred.column())?;
        let ok = matches!(
            (pred, spec.kind),
            (Predicate::ScalarRange { .. }, IndexKind::Btree)
                | (Predicate::VectorThreshold { .. }, IndexKind::Ivf { .. })
                | (Predicate::SpatialContains { .. }, IndexKind::Spatial)
                | (Predicate::Keyword { .. }, IndexKind::Inverted)
        );
        ok.then_some(spec.kind)
    }
}
