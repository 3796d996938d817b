//! Synthetic datasets: Gaussian mixtures, random linear projections, and
//! the four-point `line4` hand-check fixture. Everything is a pure function
//! of its seed.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::array_io::{write_array, write_atomic};
use crate::error::{Error, Result};
use crate::manifest::{EmbeddingEntry, Manifest, MetadataEntry};
use crate::matrix::Matrix;
use crate::model::MetadataKind;
use crate::rng::{self, tag};

/// Spread of cluster centers relative to the unit within-cluster spread.
pub const CENTER_SCALE: f32 = 4.0;

#[derive(Debug, Clone)]
pub struct Mixture {
    pub points: Matrix<f32>,
    pub labels: Vec<u32>,
}

/// `n` points in `d` dimensions drawn around `clusters` centers; point `i`
/// belongs to cluster `i % clusters`.
pub fn gaussian_mixture(n: usize, d: usize, clusters: usize, seed: u64) -> Mixture {
    assert!(clusters >= 1 && d >= 1);
    let centers: Vec<Vec<f32>> = (0..clusters)
        .map(|c| {
            let mut r = rng::stream(seed, tag::SYNTH_CENTERS, c as u64);
            (0..d)
                .map(|_| CENTER_SCALE * r.sample::<f32, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut data = vec![0.0f32; n * d];
    data.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        let mut r = rng::stream(seed, tag::SYNTH_POINTS, i as u64);
        let center = &centers[i % clusters];
        for (x, c) in row.iter_mut().zip(center) {
            *x = c + r.sample::<f32, _>(StandardNormal);
        }
    });
    Mixture {
        points: Matrix::from_vec(n, d, data),
        labels: (0..n).map(|i| (i % clusters) as u32).collect(),
    }
}

/// Projection onto two random Gaussian directions; `variant` selects an
/// independent projection for the same seed.
pub fn random_projection(points: &Matrix<f32>, seed: u64, variant: u64) -> Matrix<f32> {
    let d = points.cols();
    let mut r = rng::stream(seed, tag::SYNTH_PROJECTION, variant);
    let scale = 1.0 / (d as f32).sqrt();
    let basis: Vec<f32> = (0..2 * d)
        .map(|_| scale * r.sample::<f32, _>(StandardNormal))
        .collect();
    let (bx, by) = basis.split_at(d);
    let mut out = Vec::with_capacity(points.rows() * 2);
    for row in points.iter_rows() {
        let mut x = 0.0f32;
        let mut y = 0.0f32;
        for ((v, a), b) in row.iter().zip(bx).zip(by) {
            x += v * a;
            y += v * b;
        }
        out.push(x);
        out.push(y);
    }
    Matrix::from_vec(points.rows(), 2, out)
}

/// Shuffles the positions of the members of every odd-numbered cluster
/// among themselves: cluster placement survives, local neighborhoods inside
/// those clusters do not.
pub fn scramble_clusters(coords: &Matrix<f32>, labels: &[u32], seed: u64) -> Matrix<f32> {
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let mut out = coords.as_slice().to_vec();
    for (label, idx) in members {
        if label % 2 == 0 {
            continue;
        }
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng::stream(seed, tag::SYNTH_SCRAMBLE, label as u64));
        for (&dst, &src) in idx.iter().zip(&shuffled) {
            out[2 * dst] = coords.get(src, 0);
            out[2 * dst + 1] = coords.get(src, 1);
        }
    }
    Matrix::from_vec(coords.rows(), 2, out)
}

/// HD points on a line at x = [0, 1, 2, 10].
pub const LINE4_HD: [f32; 4] = [0.0, 1.0, 2.0, 10.0];
/// The scrambled embedding of the line: y = [0, 10, 1, 2].
pub const LINE4_LD: [f32; 4] = [0.0, 10.0, 1.0, 2.0];

#[derive(Debug, Clone)]
pub struct DemoSpec {
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
    pub seed: u64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self {
            n: 5000,
            d: 20,
            clusters: 8,
            seed: 42,
        }
    }
}

fn embed_on_x_axis(xs: &[f32]) -> Matrix<f32> {
    Matrix::from_vec(xs.len(), 2, xs.iter().flat_map(|&x| [x, 0.0]).collect())
}

fn write_labels(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_owned(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    write_atomic(path, &bytes)
}

fn write_bundle(
    out: &Path,
    name: &str,
    hd: &Matrix<f32>,
    embeddings: &[(&str, Matrix<f32>)],
    metadata_kinds: BTreeMap<String, MetadataKind>,
    seed: u64,
) -> Result<Manifest> {
    write_array(&out.join("data/hd_points.bin"), hd)?;
    let mut manifest = Manifest::new(name, "data/hd_points.bin");
    manifest.seed = seed;
    for (emb, coords) in embeddings {
        let rel = format!("data/embeddings/{emb}.bin");
        write_array(&out.join(&rel), coords)?;
        manifest.embeddings.push(EmbeddingEntry {
            name: (*emb).to_owned(),
            coords: rel,
        });
    }
    manifest.metadata = Some(MetadataEntry {
        path: "data/metadata.csv".into(),
        kinds: metadata_kinds,
    });
    manifest.save(out)?;
    Ok(manifest)
}

/// Writes a Gaussian-mixture bundle with a `projection` embedding, a
/// `scrambled` variant of it, and a categorical `cluster` column.
pub fn write_demo_bundle(out: &Path, spec: &DemoSpec) -> Result<Manifest> {
    if spec.n < 2 || spec.d < 1 || spec.clusters < 1 {
        return Err(Error::invalid(
            "demo data needs n >= 2, d >= 1, clusters >= 1",
        ));
    }
    let mix = gaussian_mixture(spec.n, spec.d, spec.clusters, spec.seed);
    let projection = random_projection(&mix.points, spec.seed, 0);
    let scrambled = scramble_clusters(&projection, &mix.labels, spec.seed);
    write_labels(
        &out.join("data/metadata.csv"),
        &["cluster"],
        mix.labels.iter().map(|l| vec![format!("c{l}")]),
    )?;
    write_bundle(
        out,
        "gaussian-mixture",
        &mix.points,
        &[("projection", projection), ("scrambled", scrambled)],
        BTreeMap::from([("cluster".to_owned(), MetadataKind::Categorical)]),
        spec.seed,
    )
}

/// Writes the `line4` fixture: HD x = [0,1,2,10]; embeddings `identity`
/// (x, 0) and `scrambled` (y, 0) with y = [0,10,1,2]; metadata columns
/// `side` (categorical) and `x` (continuous).
pub fn write_line4_fixture(out: &Path) -> Result<Manifest> {
    let hd = Matrix::from_vec(4, 1, LINE4_HD.to_vec());
    write_labels(
        &out.join("data/metadata.csv"),
        &["side", "x"],
        ["left", "left", "left", "right"]
            .iter()
            .zip(LINE4_HD)
            .map(|(s, x)| vec![(*s).to_owned(), x.to_string()]),
    )?;
    write_bundle(
        out,
        "line4",
        &hd,
        &[
            ("identity", embed_on_x_axis(&LINE4_HD)),
            ("scrambled", embed_on_x_axis(&LINE4_LD)),
        ],
        BTreeMap::from([
            ("side".to_owned(), MetadataKind::Categorical),
            ("x".to_owned(), MetadataKind::Continuous),
        ]),
        crate::manifest::DEFAULT_SEED,
    )
}
