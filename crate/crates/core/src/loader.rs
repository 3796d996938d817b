//! Reads a manifest and everything it references into a validated bundle.
//!
//! Point and coordinate files are either canonical binary arrays or CSV
//! (header row, one point per line). CSV is converted to the same in-memory
//! f32 matrix the binary path produces.

use std::path::{Path, PathBuf};

use crate::array_io::read_array;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, MetadataEntry};
use crate::matrix::Matrix;
use crate::model::{DatasetBundle, Embedding, MetadataColumn, MetadataKind, MetadataValues};

/// A loaded dataset together with the manifest it came from.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub root: PathBuf,
    pub bundle: DatasetBundle,
}

impl Dataset {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let (manifest, root) = Manifest::load(manifest_path)?;
        let bundle = bundle_from_manifest(&manifest, &root)?;
        Ok(Self {
            manifest,
            root,
            bundle,
        })
    }
}

/// Loads and validates the bundle described by `manifest_path` (a
/// `trace.json` file or the directory containing it).
pub fn load_bundle(manifest_path: &Path) -> Result<DatasetBundle> {
    Dataset::open(manifest_path).map(|d| d.bundle)
}

pub fn bundle_from_manifest(manifest: &Manifest, root: &Path) -> Result<DatasetBundle> {
    let hd_points = read_matrix(&root.join(&manifest.hd_points))?;
    if let Some((row, col)) = hd_points.first_non_finite() {
        return Err(Error::NonFinite {
            what: "hd_points".into(),
            row,
            col,
        });
    }
    let embeddings = manifest
        .embeddings
        .iter()
        .map(|e| Ok(Embedding::new(&e.name, read_matrix(&root.join(&e.coords))?)))
        .collect::<Result<Vec<_>>>()?;
    let metadata = match &manifest.metadata {
        Some(entry) => read_metadata(root, entry)?,
        None => Vec::new(),
    };
    DatasetBundle::new(&manifest.name, hd_points, embeddings, metadata)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Binary array or numeric CSV, chosen by file extension.
pub fn read_matrix(path: &Path) -> Result<Matrix<f32>> {
    if is_csv(path) {
        read_numeric_csv(path)
    } else {
        read_array(path)
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

fn read_numeric_csv(path: &Path) -> Result<Matrix<f32>> {
    let mut reader = open_csv(path)?;
    let cols = reader.headers().map_err(|e| csv_err(path, e))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != cols {
            return Err(csv_err(
                path,
                format!("row {row} has {} fields, header has {cols}", record.len()),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f32 = field.trim().parse().map_err(|_| {
                csv_err(
                    path,
                    format!("row {row}, column {col}: {field:?} is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: path.display().to_string(),
                    row,
                    col,
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 || cols == 0 {
        return Err(csv_err(path, "no data rows"));
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

fn read_metadata(root: &Path, entry: &MetadataEntry) -> Result<Vec<MetadataColumn>> {
    let path = root.join(&entry.path);
    let mut reader = open_csv(&path)?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(&path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(&path, e))?;
        if record.len() != names.len() {
            return Err(csv_err(
                &path,
                format!("row {row} has {} fields", record.len()),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            raw[col].push(field.to_owned());
        }
    }
    names
        .into_iter()
        .zip(raw)
        .map(|(name, values)| {
            let parsed: Option<Vec<f32>> = values.iter().map(|v| v.trim().parse().ok()).collect();
            let kind = entry.kinds.get(&name).copied().unwrap_or(match &parsed {
                Some(p) if p.iter().all(|v| v.is_finite()) => MetadataKind::Continuous,
                _ => MetadataKind::Categorical,
            });
            let values = match kind {
                MetadataKind::Categorical => MetadataValues::Categorical(values),
                MetadataKind::Continuous => match parsed {
                    Some(p) => MetadataValues::Continuous(p),
                    None => {
                        return Err(csv_err(
                            &path,
                            format!("column {name} declared continuous but is not numeric"),
                        ))
                    }
                },
            };
            Ok(MetadataColumn { name, values })
        })
        .collect()
}
