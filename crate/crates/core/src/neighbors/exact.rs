use rayon::prelude::*;

use super::cmp_candidate;
use crate::distance::sq_euclidean;
use crate::matrix::Matrix;

/// Brute-force k-NN, parallel over query points.
pub(super) fn brute_force(points: &Matrix<f32>, k: usize) -> (Vec<u32>, Vec<f32>) {
    let n = points.rows();
    let rows: Vec<Vec<(f64, u32)>> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |scratch: &mut Vec<(f64, u32)>, i| {
            let q = points.row(i);
            scratch.clear();
            scratch.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (sq_euclidean(q, points.row(j)), j as u32)),
            );
            if scratch.len() > k {
                scratch.select_nth_unstable_by(k - 1, |a, b| cmp_candidate(*a, *b));
                scratch.truncate(k);
            }
            scratch.sort_unstable_by(|a, b| cmp_candidate(*a, *b));
            scratch.clone()
        })
        .collect();
    flatten(rows)
}

pub(super) fn flatten(rows: Vec<Vec<(f64, u32)>>) -> (Vec<u32>, Vec<f32>) {
    let total = rows.iter().map(Vec::len).sum();
    let mut indices = Vec::with_capacity(total);
    let mut distances = Vec::with_capacity(total);
    for row in rows {
        for (d, j) in row {
            indices.push(j);
            distances.push(d.sqrt() as f32);
        }
    }
    (indices, distances)
}
