use rand::seq::index;
use rayon::prelude::*;
use serde_json::json;

use crate::distance::sq_euclidean;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MetricColumn, MetricName, Params};
use crate::rng::{self, tag};

pub const DEFAULT_MAX_ANCHORS: usize = 1000;

/// Average ranks (1-based); tied values share the mean of the positions
/// they cover.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &p in &order[start..end] {
            ranks[p] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation: Pearson correlation of average ranks.
/// Returns 0 when either side has no rank variance.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            what: "spearman inputs".into(),
            expected: x.len().to_string(),
            found: y.len().to_string(),
        });
    }
    if x.len() < 3 {
        return Err(Error::invalid(format!(
            "spearman needs at least 3 values, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman inputs must be finite"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Reference points every point is ranked against; shared by all points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSet {
    seed: u64,
    indices: Vec<u32>,
}

impl AnchorSet {
    /// Every point is an anchor.
    pub fn all(n: usize) -> Self {
        Self {
            seed: 0,
            indices: (0..n as u32).collect(),
        }
    }

    /// `m` distinct anchors drawn uniformly with `seed`; falls back to all
    /// points when `m >= n - 1`.
    pub fn sample(n: usize, m: usize, seed: u64) -> Result<Self> {
        if m < 3 {
            return Err(Error::invalid(format!(
                "anchor set needs at least 3 anchors, got {m}"
            )));
        }
        if m + 1 >= n {
            return Ok(Self::all(n));
        }
        let mut r = rng::stream(seed, tag::ANCHORS, 0);
        let mut indices: Vec<u32> = index::sample(&mut r, n, m)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        indices.sort_unstable();
        Ok(Self { seed, indices })
    }

    /// `min(n - 1, 1000)` anchors.
    pub fn default_for(n: usize, seed: u64) -> Result<Self> {
        Self::sample(n, n.saturating_sub(1).min(DEFAULT_MAX_ANCHORS), seed)
    }

    pub fn from_indices(n: usize, mut indices: Vec<u32>) -> Result<Self> {
        indices.sort_unstable();
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= n) {
            return Err(Error::IndexOutOfRange {
                index: bad as usize,
                n,
            });
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("anchor indices must be distinct"));
        }
        if indices.len() < 3 {
            return Err(Error::invalid("anchor set needs at least 3 anchors"));
        }
        Ok(Self { seed: 0, indices })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    /// 0 when the set is not sampled.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn params(&self) -> Params {
        Params::from([
            ("anchors".to_owned(), json!(self.indices.len())),
            ("seed".to_owned(), json!(self.seed)),
        ])
    }
}

/// Per-point Spearman correlation between HD and embedding distances to the
/// shared anchor set (the point itself excluded).
pub fn distance_rank_correlation(
    hd_points: &Matrix<f32>,
    ld_coords: &Matrix<f32>,
    anchors: &AnchorSet,
) -> Result<MetricColumn> {
    Ok(distance_rank_correlation_many(hd_points, &[ld_coords], anchors)?.remove(0))
}

/// Rank correlation for several embeddings; HD ranks are computed once per
/// point and reused.
pub fn distance_rank_correlation_many(
    hd_points: &Matrix<f32>,
    embeddings: &[&Matrix<f32>],
    anchors: &AnchorSet,
) -> Result<Vec<MetricColumn>> {
    let n = hd_points.rows();
    for e in embeddings {
        super::check_rows("embedding coordinates", n, e.rows())?;
    }
    if let Some(&bad) = anchors.indices.iter().find(|&&a| a as usize >= n) {
        return Err(Error::IndexOutOfRange {
            index: bad as usize,
            n,
        });
    }
    // an anchor point loses itself from its own list
    if anchors.len() < 4 {
        return Err(Error::invalid(format!(
            "{} anchors leave fewer than 3 usable anchors for anchor points",
            anchors.len()
        )));
    }
    let per_point: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let usable: Vec<usize> = anchors
                .indices
                .iter()
                .map(|&a| a as usize)
                .filter(|&a| a != i)
                .collect();
            let q = hd_points.row(i);
            let hd_d: Vec<f64> = usable
                .iter()
                .map(|&a| sq_euclidean(q, hd_points.row(a)))
                .collect();
            let hd_ranks = average_ranks(&hd_d);
            embeddings
                .iter()
                .map(|ld| {
                    let q = ld.row(i);
                    let ld_d: Vec<f64> =
                        usable.iter().map(|&a| sq_euclidean(q, ld.row(a))).collect();
                    pearson(&hd_ranks, &average_ranks(&ld_d)) as f32
                })
                .collect()
        })
        .collect();
    Ok((0..embeddings.len())
        .map(|e| {
            let values = per_point.iter().map(|v| v[e]).collect();
            MetricColumn::new(
                MetricName::DistanceRankCorrelation,
                anchors.params(),
                values,
            )
        })
        .collect())
}
