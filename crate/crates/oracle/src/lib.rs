//! Brute-force reference implementations of every quality measure.
//!
//! Nothing here is fast and nothing here shares code with `trace-core`:
//! distances are recomputed from scratch with a plain loop, neighbor lists
//! come from a full sort, ranks come from pairwise counting. Tests compare
//! the engine against these.

use std::collections::BTreeSet;

pub mod fixtures;

/// Row-major point set, `dim` values per point.
#[derive(Debug, Clone)]
pub struct Points<'a> {
    pub data: &'a [f32],
    pub dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        Self { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Squared Euclidean distance, accumulated left to right in f64.
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        let mut s = 0.0f64;
        for (a, b) in self.row(i).iter().zip(self.row(j)) {
            let d = *a as f64 - *b as f64;
            s += d * d;
        }
        s
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.sq_dist(i, j).sqrt()
    }
}

/// k nearest neighbors of every point by full sort on (distance, index).
pub fn knn(points: &Points, k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    assert!(k >= 1 && k < n);
    (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (points.sq_dist(i, j), j))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

pub fn preservation(hd: &[Vec<usize>], ld: &[Vec<usize>], k: usize) -> Vec<f32> {
    hd.iter()
        .zip(ld)
        .map(|(a, b)| {
            let a: BTreeSet<_> = a[..k].iter().collect();
            let b: BTreeSet<_> = b[..k].iter().collect();
            (a.intersection(&b).count() as f64 / k as f64) as f32
        })
        .collect()
}

/// Exhaustive triplet accuracy: every unordered pair (j, l) for each i.
pub fn triplet_accuracy(hd: &Points, ld: &Points) -> Vec<f32> {
    let n = hd.len();
    assert_eq!(n, ld.len());
    (0..n)
        .map(|i| {
            let mut agree = 0u64;
            let mut counted = 0u64;
            for j in 0..n {
                for l in (j + 1)..n {
                    if j == i || l == i {
                        continue;
                    }
                    let h = hd.sq_dist(i, j) - hd.sq_dist(i, l);
                    let e = ld.sq_dist(i, j) - ld.sq_dist(i, l);
                    if h == 0.0 || e == 0.0 {
                        continue;
                    }
                    counted += 1;
                    if (h > 0.0) == (e > 0.0) {
                        agree += 1;
                    }
                }
            }
            if counted == 0 {
                0.5
            } else {
                (agree as f64 / counted as f64) as f32
            }
        })
        .collect()
}

/// Average ranks by counting: rank(x_i) = #{x_j < x_i} + (#{x_j == x_i} + 1) / 2.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let less = x.iter().filter(|&&v| v < xi).count() as f64;
            let equal = x.iter().filter(|&&v| v == xi).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let m = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / m;
    let my = ry.iter().sum::<f64>() / m;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Per-point Spearman correlation of HD vs LD distances to `anchors`,
/// skipping the point itself.
pub fn rank_correlation(hd: &Points, ld: &Points, anchors: &[usize]) -> Vec<f64> {
    (0..hd.len())
        .map(|i| {
            let (h, l): (Vec<f64>, Vec<f64>) = anchors
                .iter()
                .filter(|&&a| a != i)
                .map(|&a| (hd.dist(i, a), ld.dist(i, a)))
                .unzip();
            spearman(&h, &l)
        })
        .collect()
}

/// Mean pairwise Jaccard similarity of k-NN sets across embeddings.
pub fn stability(graphs: &[Vec<Vec<usize>>], k: usize) -> Vec<f32> {
    let n = graphs[0].len();
    let e = graphs.len();
    (0..n)
        .map(|i| {
            let mut total = 0.0f64;
            let mut pairs = 0usize;
            for a in 0..e {
                for b in (a + 1)..e {
                    let sa: BTreeSet<_> = graphs[a][i][..k].iter().collect();
                    let sb: BTreeSet<_> = graphs[b][i][..k].iter().collect();
                    let inter = sa.intersection(&sb).count() as f64;
                    let union = sa.union(&sb).count() as f64;
                    total += inter / union;
                    pairs += 1;
                }
            }
            (total / pairs as f64) as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: [f32; 4] = [0.0, 1.0, 2.0, 10.0];
    const SCRAMBLED: [f32; 4] = [0.0, 10.0, 1.0, 2.0];

    #[test]
    fn line4_knn() {
        let p = Points::new(&LINE, 1);
        assert_eq!(knn(&p, 1), vec![vec![1], vec![0], vec![1], vec![2]]);
        assert_eq!(knn(&p, 3)[0], vec![1, 2, 3]);
    }

    #[test]
    fn line4_preservation_and_triplets() {
        let hd = Points::new(&LINE, 1);
        let ld = Points::new(&SCRAMBLED, 1);
        assert_eq!(
            preservation(&knn(&hd, 1), &knn(&ld, 1), 1),
            vec![0.0, 0.0, 0.0, 1.0]
        );
        let t = triplet_accuracy(&hd, &ld);
        assert_eq!(
            t,
            vec![(1.0f64 / 3.0) as f32, 0.0, 0.0, (2.0f64 / 3.0) as f32]
        );
    }

    #[test]
    fn line4_rank_correlation_of_point_3() {
        let hd = Points::new(&LINE, 1);
        let ld = Points::new(&SCRAMBLED, 1);
        let rho = rank_correlation(&hd, &ld, &[0, 1, 2, 3]);
        assert!((rho[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_with_ties() {
        let r = spearman(&[1.0, 2.0, 2.0, 5.0], &[1.0, 3.0, 2.0, 4.0]);
        assert!((r - 4.5 / 22.5f64.sqrt()).abs() < 1e-12);
        assert!((r - 0.9487).abs() < 1e-4);
    }

    #[test]
    fn stability_three_embeddings() {
        let g = vec![vec![vec![1, 2]], vec![vec![1, 2]], vec![vec![1, 3]]];
        let s = stability(&g, 2);
        assert!((s[0] as f64 - 5.0 / 9.0).abs() < 1e-7);
    }
}
