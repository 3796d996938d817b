//! `trace.json`: ties the raw arrays, embeddings, metadata and precomputed
//! artifacts of one dataset together. All paths are relative to the
//! directory holding the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array_io::write_atomic;
use crate::error::{Error, Result};
use crate::model::{MetadataKind, MetricName, Params};
use crate::neighbors::Exactness;

pub const MANIFEST_FILE: &str = "trace.json";
pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_K_LIST: [usize; 4] = [10, 50, 100, 200];
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub hd_points: String,
    pub embeddings: Vec<EmbeddingEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<MetadataEntry>,
    #[serde(default)]
    pub cache: CachePaths,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub precomputed: Precomputed,
}

fn default_k_list() -> Vec<usize> {
    DEFAULT_K_LIST.to_vec()
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub name: String,
    pub coords: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataEntry {
    pub path: String,
    /// Declared column kinds; undeclared columns are inferred.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub kinds: BTreeMap<String, MetadataKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachePaths {
    pub neighbors: String,
    pub metrics: String,
}

impl Default for CachePaths {
    fn default() -> Self {
        Self {
            neighbors: "cache/neighbors".into(),
            metrics: "cache/metrics".into(),
        }
    }
}

/// Everything the last precompute run produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Precomputed {
    #[serde(default)]
    pub graphs: Vec<GraphEntry>,
    #[serde(default)]
    pub columns: Vec<ColumnEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEntry {
    pub space_id: String,
    pub k: usize,
    pub exactness: Exactness,
    /// Path stem relative to the dataset root; the graph lives in
    /// `{stem}.indices.bin`, `{stem}.distances.bin` and `{stem}.json`.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEntry {
    /// `None` for bundle-level columns (point stability).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
    pub metric_name: MetricName,
    pub params: Params,
    /// Array file relative to the dataset root; the descriptor sits next to
    /// it with a `.json` extension.
    pub path: String,
}

/// Accepts either a dataset directory or the manifest file itself.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_owned()
    }
}

impl Manifest {
    pub fn new(name: impl Into<String>, hd_points: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            hd_points: hd_points.into(),
            embeddings: Vec::new(),
            metadata: None,
            cache: CachePaths::default(),
            k_list: default_k_list(),
            seed: DEFAULT_SEED,
            precomputed: Precomputed::default(),
        }
    }

    pub fn from_slice(path: &Path, raw: &[u8]) -> Result<Self> {
        let json_err = |source| Error::Json {
            path: path.to_owned(),
            source,
        };
        let value: serde_json::Value = serde_json::from_slice(raw).map_err(json_err)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(1) => {}
            Some(v) => return Err(Error::UnknownSchemaVersion(v.min(u32::MAX as u64) as u32)),
            None => {
                return Err(Error::invalid(format!(
                    "{} has no integer schema_version",
                    path.display()
                )))
            }
        }
        serde_json::from_value(value).map_err(json_err)
    }

    /// Loads a manifest; returns it with the dataset root directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let path = resolve_manifest_path(path);
        let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = Self::from_slice(&path, &raw)?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((manifest, root))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    /// Atomic replace of `{root}/trace.json`.
    pub fn save(&self, root: &Path) -> Result<()> {
        write_atomic(&root.join(MANIFEST_FILE), &self.to_bytes())
    }
}
