use serde::Serialize;

use super::cache::{column_state, graph_state, CacheState, MetricDescriptorKey};
use super::{Digests, Plan, PrecomputeConfig};
use crate::error::Result;
use crate::loader::Dataset;
use crate::model::{MetricName, Params};
use crate::neighbors::Exactness;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnStatus {
    pub embedding: Option<String>,
    pub metric_name: MetricName,
    pub params: Params,
    pub path: String,
    #[serde(flatten)]
    pub state: CacheState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStatus {
    pub space_id: String,
    pub k: usize,
    pub exactness: Exactness,
    pub path: String,
    #[serde(flatten)]
    pub state: CacheState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusReport {
    pub graphs: Vec<GraphStatus>,
    pub columns: Vec<ColumnStatus>,
    pub warnings: Vec<String>,
}

impl StatusReport {
    /// Entries (graphs and columns) not in the `Present` state.
    pub fn incomplete(&self) -> usize {
        self.graphs
            .iter()
            .filter(|g| g.state != CacheState::Present)
            .count()
            + self
                .columns
                .iter()
                .filter(|c| c.state != CacheState::Present)
                .count()
    }

    pub fn is_complete(&self) -> bool {
        self.incomplete() == 0
    }

    pub fn missing_columns(&self) -> impl Iterator<Item = &ColumnStatus> {
        self.columns
            .iter()
            .filter(|c| c.state == CacheState::Missing)
    }
}

/// Cache state of everything the manifest's own config calls for.
pub fn status(dataset: &Dataset) -> Result<StatusReport> {
    status_with(dataset, &PrecomputeConfig::from_manifest(&dataset.manifest))
}

/// Cache state of everything `config` calls for. Reads descriptors and
/// array headers only; unreadable entries are reported, not returned as
/// errors.
pub fn status_with(dataset: &Dataset, config: &PrecomputeConfig) -> Result<StatusReport> {
    let plan = Plan::new(&dataset.bundle, &dataset.manifest.cache, config)?;
    let digests = Digests::new(&dataset.bundle, &plan);
    let root = &dataset.root;
    let graphs = plan
        .graphs
        .iter()
        .zip(&digests.graphs)
        .map(|(g, expected)| GraphStatus {
            space_id: g.space_id.clone(),
            k: g.k,
            exactness: g.exactness,
            path: g.path.clone(),
            state: graph_state(&root.join(&g.path), expected, plan.n),
        })
        .collect();
    let columns = plan
        .columns
        .iter()
        .zip(&digests.columns)
        .map(|(c, digest)| ColumnStatus {
            embedding: c.embedding.clone(),
            metric_name: c.metric_name,
            params: c.params.clone(),
            path: c.path.clone(),
            state: column_state(
                &root.join(&c.path),
                &MetricDescriptorKey {
                    metric_name: c.metric_name,
                    params: &c.params,
                    input_digest: digest,
                },
                plan.n,
            ),
        })
        .collect();
    Ok(StatusReport {
        graphs,
        columns,
        warnings: plan.warnings,
    })
}
