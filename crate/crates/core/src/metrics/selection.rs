use crate::distance::euclidean;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neighbors::NeighborGraph;

/// Exact Euclidean HD distance from `anchor` to every point.
pub fn hd_distances_to_point(hd_points: &Matrix<f32>, anchor: usize) -> Result<Vec<f32>> {
    let n = hd_points.rows();
    if anchor >= n {
        return Err(Error::IndexOutOfRange { index: anchor, n });
    }
    let q = hd_points.row(anchor);
    Ok(hd_points
        .iter_rows()
        .map(|r| euclidean(q, r) as f32)
        .collect())
}

/// Union of the `k` HD neighbors of every selected point, minus the
/// selection, sorted ascending.
pub fn hd_neighbor_union(
    selection: &[u32],
    hd_graph: &NeighborGraph,
    k: usize,
) -> Result<Vec<u32>> {
    if selection.is_empty() {
        return Err(Error::invalid("selection is empty"));
    }
    if k == 0 || k > hd_graph.k() {
        return Err(Error::KOutOfRange {
            k,
            max: hd_graph.k(),
        });
    }
    let n = hd_graph.n();
    let mut selected = vec![false; n];
    for &i in selection {
        let i = i as usize;
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        selected[i] = true;
    }
    let mut hit = vec![false; n];
    for &i in selection {
        for &j in hd_graph.first_k(i as usize, k) {
            hit[j as usize] = true;
        }
    }
    Ok((0..n as u32)
        .filter(|&j| hit[j as usize] && !selected[j as usize])
        .collect())
}
