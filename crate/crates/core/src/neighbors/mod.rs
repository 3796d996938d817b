//! k-nearest-neighbor graphs over HD points and embedding coordinates.
//!
//! Every builder orders candidates by the total order `(squared distance,
//! index)` computed with [`crate::distance::sq_euclidean`], so exact builds
//! agree bit-for-bit whichever algorithm produced them.

mod descent;
mod exact;
mod kdtree;

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array_io::{read_array, write_array, write_atomic};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use descent::DescentParams;

/// Up to this many points, approximate requests are answered exactly.
pub const EXACT_FALLBACK_MAX_N: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    Approximate,
}

impl Exactness {
    pub fn as_str(self) -> &'static str {
        match self {
            Exactness::Exact => "exact",
            Exactness::Approximate => "approximate",
        }
    }
}

/// k-NN lists for one point set, rows sorted by ascending distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<u32>,
    distances: Vec<f32>,
    exactness: Exactness,
    space_id: String,
}

/// Candidate ordering used everywhere: distance first, then point index.
#[inline]
pub(crate) fn cmp_candidate(a: (f64, u32), b: (f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

pub(crate) fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        Err(Error::KOutOfRange {
            k,
            max: n.saturating_sub(1),
        })
    } else {
        Ok(())
    }
}

impl NeighborGraph {
    pub(crate) fn from_parts(
        k: usize,
        indices: Vec<u32>,
        distances: Vec<f32>,
        exactness: Exactness,
    ) -> Self {
        debug_assert_eq!(indices.len(), distances.len());
        debug_assert!(k > 0 && indices.len() % k == 0);
        Self {
            k,
            indices,
            distances,
            exactness,
            space_id: String::new(),
        }
    }

    pub fn with_space_id(mut self, space_id: impl Into<String>) -> Self {
        self.space_id = space_id.into();
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn exactness(&self) -> Exactness {
        self.exactness
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn indices(&self, i: usize) -> &[u32] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f32] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// The `k` nearest neighbors of `i`; rows are distance-sorted so any
    /// prefix is the smaller-k answer.
    pub fn first_k(&self, i: usize, k: usize) -> &[u32] {
        &self.indices(i)[..k]
    }

    /// Graph restricted to the first `k` columns.
    pub fn prefix(&self, k: usize) -> Result<NeighborGraph> {
        if k == 0 || k > self.k {
            return Err(Error::KOutOfRange { k, max: self.k });
        }
        let n = self.n();
        let mut indices = Vec::with_capacity(n * k);
        let mut distances = Vec::with_capacity(n * k);
        for i in 0..n {
            indices.extend_from_slice(&self.indices(i)[..k]);
            distances.extend_from_slice(&self.distances(i)[..k]);
        }
        Ok(NeighborGraph {
            k,
            indices,
            distances,
            exactness: self.exactness,
            space_id: self.space_id.clone(),
        })
    }

    /// Checks the structural invariants: no self loops, no duplicate
    /// neighbors, rows non-decreasing in distance, indices in range.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            let row = self.indices(i);
            let dist = self.distances(i);
            for (p, &j) in row.iter().enumerate() {
                if j as usize >= n {
                    return Err(Error::IndexOutOfRange {
                        index: j as usize,
                        n,
                    });
                }
                if j as usize == i {
                    return Err(Error::invalid(format!("self loop at point {i}")));
                }
                if row[..p].contains(&j) {
                    return Err(Error::invalid(format!(
                        "duplicate neighbor {j} of point {i}"
                    )));
                }
                if dist[p].is_nan() || dist[p] < 0.0 || (p > 0 && dist[p] < dist[p - 1]) {
                    return Err(Error::invalid(format!("row {i} is not distance-sorted")));
                }
            }
        }
        Ok(())
    }

    fn files(stem: &Path) -> (PathBuf, PathBuf, PathBuf) {
        let with = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        (with(".indices.bin"), with(".distances.bin"), with(".json"))
    }

    /// Writes `{stem}.indices.bin`, `{stem}.distances.bin` (each with its
    /// sidecar) and finally the `{stem}.json` descriptor.
    pub fn save(&self, stem: &Path, descriptor: &GraphDescriptor) -> Result<()> {
        let (idx_path, dist_path, desc_path) = Self::files(stem);
        let n = self.n();
        write_array(
            &idx_path,
            &Matrix::from_vec(n, self.k, self.indices.clone()),
        )?;
        write_array(
            &dist_path,
            &Matrix::from_vec(n, self.k, self.distances.clone()),
        )?;
        let bytes = serde_json::to_vec_pretty(descriptor).expect("descriptor serializes");
        write_atomic(&desc_path, &bytes)
    }

    pub fn read_descriptor(stem: &Path) -> Result<GraphDescriptor> {
        let (_, _, desc_path) = Self::files(stem);
        let raw = fs::read(&desc_path).map_err(|e| Error::io(&desc_path, e))?;
        serde_json::from_slice(&raw).map_err(|source| Error::Json {
            path: desc_path,
            source,
        })
    }

    pub fn load(stem: &Path) -> Result<(NeighborGraph, GraphDescriptor)> {
        let descriptor = Self::read_descriptor(stem)?;
        let (idx_path, dist_path, _) = Self::files(stem);
        let indices = read_array::<u32>(&idx_path)?;
        let distances = read_array::<f32>(&dist_path)?;
        if indices.shape() != distances.shape() || indices.cols() != descriptor.k {
            return Err(Error::ShapeMismatch {
                what: format!("graph {}", stem.display()),
                expected: format!("k = {}", descriptor.k),
                found: format!(
                    "indices {:?}, distances {:?}",
                    indices.shape(),
                    distances.shape()
                ),
            });
        }
        let graph = NeighborGraph {
            k: descriptor.k,
            indices: indices.into_vec(),
            distances: distances.into_vec(),
            exactness: descriptor.exactness,
            space_id: descriptor.space_id.clone(),
        };
        graph.validate()?;
        Ok((graph, descriptor))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDescriptor {
    pub space_id: String,
    pub k: usize,
    pub exactness: Exactness,
    pub seed: u64,
    /// Digest of the points the graph was built from.
    #[serde(default)]
    pub input_digest: String,
}

/// Exact k-NN: self excluded, ties broken by smaller index.
pub fn build_exact_knn(points: &Matrix<f32>, k: usize) -> Result<NeighborGraph> {
    check_k(points.rows(), k)?;
    let (indices, distances) = if kdtree::worthwhile(points) {
        kdtree::KdTree::build(points).knn_all(k)
    } else {
        exact::brute_force(points, k)
    };
    Ok(NeighborGraph::from_parts(
        k,
        indices,
        distances,
        Exactness::Exact,
    ))
}

/// Approximate k-NN by neighbor descent; small inputs are answered exactly.
///
/// `recall_target` trades work for quality: it sets the convergence
/// threshold of the refinement loop. The result depends only on
/// `(points, k, recall_target, seed)`, never on the worker count.
pub fn build_approx_knn(
    points: &Matrix<f32>,
    k: usize,
    recall_target: f64,
    seed: u64,
) -> Result<NeighborGraph> {
    check_k(points.rows(), k)?;
    if !(recall_target > 0.0 && recall_target <= 1.0) {
        return Err(Error::invalid(format!(
            "recall_target must be in (0, 1], got {recall_target}"
        )));
    }
    if points.rows() <= EXACT_FALLBACK_MAX_N {
        return build_exact_knn(points, k);
    }
    let params = DescentParams::for_recall(k, recall_target, seed);
    let (indices, distances) = descent::nn_descent(points, &params);
    Ok(NeighborGraph::from_parts(
        k,
        indices,
        distances,
        Exactness::Approximate,
    ))
}

/// Mean over points of `|approx[i] ∩ exact[i]| / k`.
pub fn knn_recall(approx: &NeighborGraph, exact: &NeighborGraph) -> Result<f64> {
    if approx.n() != exact.n() || approx.k() != exact.k() || approx.space_id() != exact.space_id() {
        return Err(Error::ShapeMismatch {
            what: "graphs compared for recall".into(),
            expected: format!(
                "n={} k={} space={:?}",
                exact.n(),
                exact.k(),
                exact.space_id()
            ),
            found: format!(
                "n={} k={} space={:?}",
                approx.n(),
                approx.k(),
                approx.space_id()
            ),
        });
    }
    let n = exact.n();
    let k = exact.k();
    let hits: usize = (0..n)
        .map(|i| {
            let truth = exact.indices(i);
            approx
                .indices(i)
                .iter()
                .filter(|j| truth.contains(j))
                .count()
        })
        .sum();
    Ok(hits as f64 / (n * k) as f64)
}
