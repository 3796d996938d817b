//! Binary array files: raw row-major little-endian payload plus a JSON
//! sidecar `{stem}.meta.json` describing dtype and shape.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Scalar types that can be stored in an array file.
pub trait Element: Copy + Send + Sync + 'static {
    const DTYPE: &'static str;
    fn to_le(self) -> [u8; 4];
    fn from_le(bytes: [u8; 4]) -> Self;
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
    fn to_le(self) -> [u8; 4] {
        self.to_le_bytes()
    }
    fn from_le(bytes: [u8; 4]) -> Self {
        f32::from_le_bytes(bytes)
    }
}

impl Element for u32 {
    const DTYPE: &'static str = "u32";
    fn to_le(self) -> [u8; 4] {
        self.to_le_bytes()
    }
    fn from_le(bytes: [u8; 4]) -> Self {
        u32::from_le_bytes(bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub dtype: String,
    pub shape: [usize; 2],
    pub order: String,
    pub endian: String,
}

impl ArrayHeader {
    fn for_matrix<T: Element>(m: &Matrix<T>) -> Self {
        Self {
            dtype: T::DTYPE.to_owned(),
            shape: m.shape(),
            order: "row-major".to_owned(),
            endian: "little".to_owned(),
        }
    }
}

/// `data/foo.bin` -> `data/foo.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Writes `bytes` to a temporary sibling, syncs it, and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes the payload first, then the sidecar, each atomically.
pub fn write_array<T: Element>(path: &Path, m: &Matrix<T>) -> Result<()> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::invalid(format!(
            "refusing to write empty array {} with shape {:?}",
            path.display(),
            m.shape()
        )));
    }
    let payload: Vec<u8> = m.as_slice().iter().flat_map(|v| v.to_le()).collect();
    write_atomic(path, &payload)?;
    let header = serde_json::to_vec(&ArrayHeader::for_matrix(m)).expect("header serializes");
    write_atomic(&sidecar_path(path), &header)
}

pub fn read_header(path: &Path) -> Result<ArrayHeader> {
    let meta_path = sidecar_path(path);
    let raw = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    serde_json::from_slice(&raw).map_err(|source| Error::Json {
        path: meta_path,
        source,
    })
}

pub fn read_array<T: Element>(path: &Path) -> Result<Matrix<T>> {
    let header = read_header(path)?;
    let bad = |message: String| Error::Header {
        path: sidecar_path(path),
        message,
    };
    if header.dtype != T::DTYPE {
        return Err(bad(format!(
            "dtype {} but expected {}",
            header.dtype,
            T::DTYPE
        )));
    }
    if header.order != "row-major" {
        return Err(bad(format!("unsupported order {}", header.order)));
    }
    if header.endian != "little" {
        return Err(bad(format!("unsupported endian {}", header.endian)));
    }
    let [rows, cols] = header.shape;
    if rows == 0 || cols == 0 {
        return Err(bad(format!("empty shape {:?}", header.shape)));
    }
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (rows as u64) * (cols as u64) * 4;
    if payload.len() as u64 != expected {
        return Err(Error::PayloadLength {
            path: path.to_owned(),
            expected,
            found: payload.len() as u64,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| T::from_le([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}
