//! In-memory data model: the validated dataset bundle and per-point columns.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Maximum number of distinct labels in a categorical metadata column.
pub const MAX_CATEGORIES: usize = 1024;

/// Space identifier reserved for the high-dimensional points.
pub const HD_SPACE: &str = "hd";

#[derive(Debug, Clone)]
pub struct Embedding {
    name: String,
    coords: Matrix<f32>,
}

impl Embedding {
    pub fn new(name: impl Into<String>, coords: Matrix<f32>) -> Self {
        Self {
            name: name.into(),
            coords,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coords(&self) -> &Matrix<f32> {
        &self.coords
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetadataValues {
    Categorical(Vec<String>),
    Continuous(Vec<f32>),
}

impl MetadataValues {
    pub fn len(&self) -> usize {
        match self {
            MetadataValues::Categorical(v) => v.len(),
            MetadataValues::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetadataColumn {
    pub name: String,
    pub values: MetadataValues,
}

impl MetadataColumn {
    pub fn kind(&self) -> MetadataKind {
        match self.values {
            MetadataValues::Categorical(_) => MetadataKind::Categorical,
            MetadataValues::Continuous(_) => MetadataKind::Continuous,
        }
    }
}

/// Immutable validated dataset: HD points, embeddings and metadata columns.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    name: String,
    hd_points: Matrix<f32>,
    embeddings: Vec<Embedding>,
    metadata: Vec<MetadataColumn>,
}

/// Names end up in file paths and URLs.
pub(crate) fn validate_name(what: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with(['.', '_'])
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what} name {name:?} must be non-empty, use only [A-Za-z0-9_.-] and not start with '.' or '_'"
        )))
    }
}

impl DatasetBundle {
    pub fn new(
        name: impl Into<String>,
        hd_points: Matrix<f32>,
        embeddings: Vec<Embedding>,
        metadata: Vec<MetadataColumn>,
    ) -> Result<Self> {
        let n = hd_points.rows();
        if n < 2 {
            return Err(Error::ShapeMismatch {
                what: "hd_points".into(),
                expected: "at least 2 rows".into(),
                found: n.to_string(),
            });
        }
        if hd_points.cols() < 1 {
            return Err(Error::ShapeMismatch {
                what: "hd_points".into(),
                expected: "at least 1 column".into(),
                found: "0".into(),
            });
        }
        if let Some((row, col)) = hd_points.first_non_finite() {
            return Err(Error::NonFinite {
                what: "hd_points".into(),
                row,
                col,
            });
        }

        let mut seen = HashSet::new();
        for e in &embeddings {
            validate_name("embedding", e.name())?;
            if e.name() == HD_SPACE {
                return Err(Error::invalid("embedding name \"hd\" is reserved"));
            }
            if !seen.insert(e.name()) {
                return Err(Error::invalid(format!(
                    "duplicate embedding name {:?}",
                    e.name()
                )));
            }
            let shape = e.coords().shape();
            if shape != [n, 2] {
                return Err(Error::ShapeMismatch {
                    what: format!("embedding {}", e.name()),
                    expected: format!("{n}x2"),
                    found: format!("{}x{}", shape[0], shape[1]),
                });
            }
            if let Some((row, col)) = e.coords().first_non_finite() {
                return Err(Error::NonFinite {
                    what: format!("embedding {}", e.name()),
                    row,
                    col,
                });
            }
        }

        let mut seen = HashSet::new();
        for col in &metadata {
            validate_name("metadata column", &col.name)?;
            if !seen.insert(col.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate metadata column {:?}",
                    col.name
                )));
            }
            if col.values.len() != n {
                return Err(Error::ShapeMismatch {
                    what: format!("metadata column {}", col.name),
                    expected: n.to_string(),
                    found: col.values.len().to_string(),
                });
            }
            match &col.values {
                MetadataValues::Categorical(v) => {
                    let distinct: HashSet<&String> = v.iter().collect();
                    if distinct.len() > MAX_CATEGORIES {
                        return Err(Error::invalid(format!(
                            "metadata column {} has {} categories (max {MAX_CATEGORIES})",
                            col.name,
                            distinct.len()
                        )));
                    }
                }
                MetadataValues::Continuous(v) => {
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::NonFinite {
                            what: format!("metadata column {}", col.name),
                            row,
                            col: 0,
                        });
                    }
                }
            }
        }

        Ok(Self {
            name: name.into(),
            hd_points,
            embeddings,
            metadata,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.hd_points.rows()
    }

    pub fn dim(&self) -> usize {
        self.hd_points.cols()
    }

    pub fn hd_points(&self) -> &Matrix<f32> {
        &self.hd_points
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn embedding(&self, name: &str) -> Option<&Embedding> {
        self.embeddings.iter().find(|e| e.name() == name)
    }

    pub fn metadata(&self) -> &[MetadataColumn] {
        &self.metadata
    }

    pub fn metadata_column(&self, name: &str) -> Option<&MetadataColumn> {
        self.metadata.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    NeighborhoodPreservation,
    TripletAccuracy,
    DistanceRankCorrelation,
    PointStability,
    HdDistanceToAnchor,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::NeighborhoodPreservation,
        MetricName::TripletAccuracy,
        MetricName::DistanceRankCorrelation,
        MetricName::PointStability,
        MetricName::HdDistanceToAnchor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::NeighborhoodPreservation => "neighborhood_preservation",
            MetricName::TripletAccuracy => "triplet_accuracy",
            MetricName::DistanceRankCorrelation => "distance_rank_correlation",
            MetricName::PointStability => "point_stability",
            MetricName::HdDistanceToAnchor => "hd_distance_to_anchor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Theoretical value range, if the metric is bounded.
    pub fn bounds(self) -> Option<(f32, f32)> {
        match self {
            MetricName::NeighborhoodPreservation
            | MetricName::TripletAccuracy
            | MetricName::PointStability => Some((0.0, 1.0)),
            MetricName::DistanceRankCorrelation => Some((-1.0, 1.0)),
            MetricName::HdDistanceToAnchor => None,
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters a metric column was computed with, e.g. `k`, `seed`.
pub type Params = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub metric_name: MetricName,
    pub params: Params,
    pub vmin: f32,
    pub vmax: f32,
}

/// One per-point quality measure.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricColumn {
    pub metric_name: MetricName,
    pub params: Params,
    pub values: Vec<f32>,
    pub vmin: f32,
    pub vmax: f32,
}

impl MetricColumn {
    /// Bounded metrics display over their full theoretical range so colors
    /// are comparable across embeddings; unbounded ones over the data range.
    pub fn new(metric_name: MetricName, params: Params, values: Vec<f32>) -> Self {
        let (vmin, vmax) = match metric_name.bounds() {
            Some(b) => b,
            None => values
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        };
        Self {
            metric_name,
            params,
            values,
            vmin,
            vmax,
        }
    }

    pub fn descriptor(&self) -> MetricDescriptor {
        MetricDescriptor {
            metric_name: self.metric_name,
            params: self.params.clone(),
            vmin: self.vmin,
            vmax: self.vmax,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len().max(1) as f64
    }
}
