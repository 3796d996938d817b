use std::collections::BTreeMap;
use std::path::Path;

use axum::body::Bytes;
use serde::Serialize;
use trace_core::loader::Dataset;
use trace_core::matrix::Matrix;
use trace_core::model::{MetadataKind, MetadataValues, MetricDescriptor, HD_SPACE};
use trace_core::neighbors::{Exactness, NeighborGraph};
use trace_core::pipeline::cache::CacheState;
use trace_core::pipeline::status;
use trace_core::Result;

pub(crate) struct ServedColumn {
    /// `None` for bundle-level columns, which are served under every
    /// embedding.
    pub embedding: Option<String>,
    pub descriptor: MetricDescriptor,
    pub body: Bytes,
}

pub(crate) enum MetadataBody {
    Categorical(Bytes),
    Continuous(Bytes),
}

#[derive(Serialize)]
struct MetadataInfo<'a> {
    name: &'a str,
    kind: MetadataKind,
}

#[derive(Serialize)]
struct ManifestView<'a> {
    dataset: &'a str,
    n: usize,
    embeddings: Vec<&'a str>,
    metrics: BTreeMap<&'a str, Vec<&'a MetricDescriptor>>,
    bundle_metrics: Vec<&'a MetricDescriptor>,
    metadata: Vec<MetadataInfo<'a>>,
    /// Largest k accepted by the neighbor-union endpoint; null until
    /// precomputed.
    kmax: Option<usize>,
    hd_exactness: Option<Exactness>,
}

/// Everything the API serves, loaded once at startup and never mutated.
pub struct ServiceState {
    pub(crate) n: usize,
    pub(crate) hd_points: Matrix<f32>,
    pub(crate) hd_graph: Option<NeighborGraph>,
    pub(crate) coords: Vec<(String, Bytes)>,
    pub(crate) columns: Vec<ServedColumn>,
    pub(crate) metadata: BTreeMap<String, MetadataBody>,
    pub(crate) manifest_body: Bytes,
    /// Cache entries listed in the manifest but not servable, with reason.
    pub skipped: Vec<String>,
}

impl ServiceState {
    /// `path` is a dataset directory or its manifest file.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = trace_core::manifest::resolve_manifest_path(path);
        Self::from_dataset(Dataset::open(&manifest_path)?)
    }

    /// Only cache entries whose inputs and parameters still match the
    /// bundle are served; the rest are reported in `skipped`.
    pub fn from_dataset(ds: Dataset) -> Result<Self> {
        let report = status(&ds)?;
        let state_of = |path: &str| {
            report
                .columns
                .iter()
                .map(|c| (&c.path, &c.state))
                .chain(report.graphs.iter().map(|g| (&g.path, &g.state)))
                .find(|(p, _)| p.as_str() == path)
                .map(|(_, s)| s.clone())
                .unwrap_or(CacheState::Missing)
        };
        let mut skipped = Vec::new();

        let mut columns = Vec::new();
        for entry in &ds.manifest.precomputed.columns {
            match state_of(&entry.path) {
                CacheState::Present => {}
                other => {
                    skipped.push(format!("{}: {other:?}", entry.path));
                    continue;
                }
            }
            let array = ds.root.join(&entry.path);
            let loaded =
                trace_core::pipeline::cache::read_column_descriptor(&array).and_then(|d| {
                    let raw = std::fs::read(&array).map_err(|e| trace_core::Error::Io {
                        path: array.clone(),
                        source: e,
                    })?;
                    Ok((d, raw))
                });
            match loaded {
                Ok((desc, raw)) => columns.push(ServedColumn {
                    embedding: entry.embedding.clone(),
                    descriptor: desc.descriptor,
                    body: Bytes::from(raw),
                }),
                Err(e) => skipped.push(format!("{}: {e}", entry.path)),
            }
        }

        let mut hd_graph = None;
        if let Some(g) = ds
            .manifest
            .precomputed
            .graphs
            .iter()
            .find(|g| g.space_id == HD_SPACE)
        {
            match state_of(&g.path) {
                CacheState::Present => match NeighborGraph::load(&ds.root.join(&g.path)) {
                    Ok((graph, _)) => hd_graph = Some(graph),
                    Err(e) => skipped.push(format!("{}: {e}", g.path)),
                },
                other => skipped.push(format!("{}: {other:?}", g.path)),
            }
        }
        for s in &skipped {
            tracing::warn!("not serving {s}");
        }

        let bundle = &ds.bundle;
        let coords = bundle
            .embeddings()
            .iter()
            .map(|e| (e.name().to_owned(), Bytes::from(e.coords().to_le_bytes())))
            .collect();
        let metadata = bundle
            .metadata()
            .iter()
            .map(|c| {
                let body = match &c.values {
                    MetadataValues::Categorical(v) => MetadataBody::Categorical(Bytes::from(
                        serde_json::to_vec(v).expect("strings serialize"),
                    )),
                    MetadataValues::Continuous(v) => MetadataBody::Continuous(Bytes::from(
                        Matrix::from_vec(v.len(), 1, v.clone()).to_le_bytes(),
                    )),
                };
                (c.name.clone(), body)
            })
            .collect();

        let view = ManifestView {
            dataset: bundle.name(),
            n: bundle.n(),
            embeddings: bundle.embeddings().iter().map(|e| e.name()).collect(),
            metrics: bundle
                .embeddings()
                .iter()
                .map(|e| {
                    let list = columns
                        .iter()
                        .filter(|c| c.embedding.as_deref() == Some(e.name()))
                        .map(|c| &c.descriptor)
                        .collect();
                    (e.name(), list)
                })
                .collect(),
            bundle_metrics: columns
                .iter()
                .filter(|c| c.embedding.is_none())
                .map(|c| &c.descriptor)
                .collect(),
            metadata: bundle
                .metadata()
                .iter()
                .map(|c| MetadataInfo {
                    name: &c.name,
                    kind: c.kind(),
                })
                .collect(),
            kmax: hd_graph.as_ref().map(NeighborGraph::k),
            hd_exactness: hd_graph.as_ref().map(NeighborGraph::exactness),
        };
        let manifest_body =
            Bytes::from(serde_json::to_vec(&view).expect("manifest view serializes"));

        Ok(Self {
            n: bundle.n(),
            hd_points: bundle.hd_points().clone(),
            hd_graph,
            coords,
            columns,
            metadata,
            manifest_body,
            skipped,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of metric columns being served.
    pub fn column_count(&self) -> usize {
        self.columns.len()
    }
}
