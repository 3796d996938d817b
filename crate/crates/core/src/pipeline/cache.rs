//! On-disk cache: column descriptors, input digests and the write lock.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array_io::{read_array, read_header, write_array, write_atomic};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MetricColumn, MetricDescriptor};
use crate::neighbors::{GraphDescriptor, NeighborGraph};

/// Descriptor stored next to every cached metric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    #[serde(flatten)]
    pub descriptor: MetricDescriptor,
    pub input_digest: String,
}

pub fn digest_matrix(m: &Matrix<f32>) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    h.update(m.to_le_bytes());
    hex::encode(h.finalize())
}

pub fn digest_parts<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

/// `metrics/emb/x.k10.bin` -> `metrics/emb/x.k10.json`.
pub fn descriptor_path(array: &Path) -> PathBuf {
    array.with_extension("json")
}

pub fn read_column_descriptor(array: &Path) -> Result<ColumnDescriptor> {
    let path = descriptor_path(array);
    let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&raw).map_err(|source| Error::Json { path, source })
}

/// Array and sidecar first, descriptor last: a descriptor never points at a
/// partially written array.
pub fn write_column(array: &Path, column: &MetricColumn, input_digest: &str) -> Result<()> {
    let n = column.values.len();
    write_array(array, &Matrix::from_vec(n, 1, column.values.clone()))?;
    let desc = ColumnDescriptor {
        descriptor: column.descriptor(),
        input_digest: input_digest.to_owned(),
    };
    let bytes = serde_json::to_vec_pretty(&desc).expect("descriptor serializes");
    write_atomic(&descriptor_path(array), &bytes)
}

pub fn read_column(array: &Path) -> Result<MetricColumn> {
    let desc = read_column_descriptor(array)?;
    let values = read_array::<f32>(array)?;
    if values.cols() != 1 {
        return Err(Error::ShapeMismatch {
            what: array.display().to_string(),
            expected: "one column".into(),
            found: values.cols().to_string(),
        });
    }
    let d = desc.descriptor;
    Ok(MetricColumn {
        metric_name: d.metric_name,
        params: d.params,
        values: values.into_vec(),
        vmin: d.vmin,
        vmax: d.vmax,
    })
}

/// State of one expected cache entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "detail")]
pub enum CacheState {
    Present,
    Missing,
    /// Readable but computed from different inputs or parameters.
    Stale,
    Corrupt(String),
}

/// Checks descriptor, parameters, digest and array header without reading
/// the payload.
pub fn column_state(array: &Path, expected: &MetricDescriptorKey<'_>, n: usize) -> CacheState {
    let desc = match read_column_descriptor(array) {
        Ok(d) => d,
        Err(Error::MissingFile(_)) => return CacheState::Missing,
        Err(e) => return CacheState::Corrupt(e.to_string()),
    };
    match read_header(array) {
        Ok(h) if h.shape == [n, 1] && h.dtype == "f32" => {}
        Ok(h) => {
            return CacheState::Corrupt(format!("array shape {:?} dtype {}", h.shape, h.dtype))
        }
        Err(e) => return CacheState::Corrupt(e.to_string()),
    }
    match fs::metadata(array) {
        Ok(m) if m.len() == (n as u64) * 4 => {}
        Ok(m) => {
            return CacheState::Corrupt(format!(
                "payload has {} bytes, expected {}",
                m.len(),
                n * 4
            ))
        }
        Err(e) => return CacheState::Corrupt(e.to_string()),
    }
    if desc.descriptor.metric_name != expected.metric_name
        || &desc.descriptor.params != expected.params
        || desc.input_digest != expected.input_digest
    {
        return CacheState::Stale;
    }
    CacheState::Present
}

/// Same check for a neighbor graph stored under `stem`.
pub fn graph_state(stem: &Path, expected: &GraphDescriptor, n: usize) -> CacheState {
    let desc = match NeighborGraph::read_descriptor(stem) {
        Ok(d) => d,
        Err(Error::MissingFile(_)) => return CacheState::Missing,
        Err(e) => return CacheState::Corrupt(e.to_string()),
    };
    for (suffix, dtype) in [(".indices.bin", "u32"), (".distances.bin", "f32")] {
        let mut s = stem.as_os_str().to_owned();
        s.push(suffix);
        let path = PathBuf::from(s);
        match read_header(&path) {
            Ok(h) if h.dtype == dtype && h.shape == [n, desc.k] => {}
            Ok(h) => {
                return CacheState::Corrupt(format!("{} has shape {:?}", path.display(), h.shape))
            }
            Err(e) => return CacheState::Corrupt(e.to_string()),
        }
        match fs::metadata(&path) {
            Ok(m) if m.len() == (n * desc.k * 4) as u64 => {}
            Ok(m) => {
                return CacheState::Corrupt(format!("{} has {} bytes", path.display(), m.len()))
            }
            Err(e) => return CacheState::Corrupt(e.to_string()),
        }
    }
    if &desc != expected {
        return CacheState::Stale;
    }
    CacheState::Present
}

pub struct MetricDescriptorKey<'a> {
    pub metric_name: crate::model::MetricName,
    pub params: &'a crate::model::Params,
    pub input_digest: &'a str,
}

/// Exclusive precompute lock; removed on drop.
#[derive(Debug)]
pub struct WriteLock {
    path: PathBuf,
}

impl WriteLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lock_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let first = WriteLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            WriteLock::acquire(dir.path()),
            Err(Error::Locked(_))
        ));
        drop(first);
        assert!(WriteLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn digests_differ_by_shape() {
        let a = Matrix::from_vec(2, 2, vec![1.0f32, 2.0, 3.0, 4.0]);
        let b = Matrix::from_vec(4, 1, vec![1.0f32, 2.0, 3.0, 4.0]);
        assert_ne!(digest_matrix(&a), digest_matrix(&b));
        assert_ne!(digest_parts(["ab", "c"]), digest_parts(["a", "bc"]));
    }
}
