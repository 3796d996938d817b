use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::distance::sq_euclidean;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MetricColumn, MetricName, Params};
use crate::rng::{self, tag};

pub const DEFAULT_TRIPLETS_PER_POINT: usize = 500;
/// Exhaustive mode enumerates `(n-1)(n-2)/2` pairs per point; above this it
/// is refused.
pub const MAX_EXHAUSTIVE_PAIRS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletMode {
    Sampled,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletSampler {
    pub seed: u64,
    pub triplets_per_point: usize,
    pub mode: TripletMode,
}

impl TripletSampler {
    pub fn sampled(seed: u64, triplets_per_point: usize) -> Self {
        Self {
            seed,
            triplets_per_point,
            mode: TripletMode::Sampled,
        }
    }

    pub fn exhaustive() -> Self {
        Self {
            seed: 0,
            triplets_per_point: 0,
            mode: TripletMode::Exhaustive,
        }
    }

    pub fn pairs_per_point(n: usize) -> usize {
        n.saturating_sub(1) * n.saturating_sub(2) / 2
    }

    pub fn params(&self) -> Params {
        match self.mode {
            TripletMode::Exhaustive => Params::from([("mode".to_owned(), json!("exhaustive"))]),
            TripletMode::Sampled => Params::from([
                ("mode".to_owned(), json!("sampled")),
                ("seed".to_owned(), json!(self.seed)),
                (
                    "triplets_per_point".to_owned(),
                    json!(self.triplets_per_point),
                ),
            ]),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n < 3 {
            return Err(Error::invalid(format!(
                "triplet accuracy needs n >= 3, got {n}"
            )));
        }
        match self.mode {
            TripletMode::Exhaustive if Self::pairs_per_point(n) > MAX_EXHAUSTIVE_PAIRS => {
                Err(Error::invalid(format!(
                    "exhaustive triplets need (n-1)(n-2)/2 <= {MAX_EXHAUSTIVE_PAIRS} (n = {n})"
                )))
            }
            TripletMode::Sampled if self.triplets_per_point == 0 => {
                Err(Error::invalid("triplets_per_point must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Running agreement tally for one (point, embedding).
#[derive(Clone, Copy, Default)]
struct Tally {
    agree: u32,
    counted: u32,
}

impl Tally {
    #[inline]
    fn record(&mut self, hd_diff: f64, ld_diff: f64) {
        if hd_diff == 0.0 || ld_diff == 0.0 {
            return;
        }
        self.counted += 1;
        if (hd_diff > 0.0) == (ld_diff > 0.0) {
            self.agree += 1;
        }
    }

    fn value(self) -> f32 {
        if self.counted == 0 {
            0.5
        } else {
            (self.agree as f64 / self.counted as f64) as f32
        }
    }
}

/// Fraction of triplets `(i, j, l)` whose relative distance order from `i`
/// agrees between HD and embedding. Ties in either space are discarded;
/// points whose triplets are all discarded score 0.5.
pub fn triplet_accuracy(
    hd_points: &Matrix<f32>,
    ld_coords: &Matrix<f32>,
    sampler: &TripletSampler,
) -> Result<MetricColumn> {
    Ok(triplet_accuracy_many(hd_points, &[ld_coords], sampler)?.remove(0))
}

/// Triplet accuracy for several embeddings of the same points. Every
/// embedding is scored on the same triplets and HD distances are computed
/// once per triplet.
pub fn triplet_accuracy_many(
    hd_points: &Matrix<f32>,
    embeddings: &[&Matrix<f32>],
    sampler: &TripletSampler,
) -> Result<Vec<MetricColumn>> {
    let n = hd_points.rows();
    sampler.validate(n)?;
    for e in embeddings {
        super::check_rows("embedding coordinates", n, e.rows())?;
    }
    let per_point: Vec<Vec<Tally>> = match sampler.mode {
        TripletMode::Exhaustive => (0..n)
            .into_par_iter()
            .map(|i| exhaustive_point(hd_points, embeddings, i))
            .collect(),
        TripletMode::Sampled => (0..n)
            .into_par_iter()
            .map(|i| sampled_point(hd_points, embeddings, i, sampler))
            .collect(),
    };
    Ok((0..embeddings.len())
        .map(|e| {
            let values = per_point.iter().map(|t| t[e].value()).collect();
            MetricColumn::new(MetricName::TripletAccuracy, sampler.params(), values)
        })
        .collect())
}

fn sq_dists_from(points: &Matrix<f32>, i: usize) -> Vec<f64> {
    let q = points.row(i);
    points.iter_rows().map(|r| sq_euclidean(q, r)).collect()
}

fn exhaustive_point(hd: &Matrix<f32>, embeddings: &[&Matrix<f32>], i: usize) -> Vec<Tally> {
    let n = hd.rows();
    let hd_d = sq_dists_from(hd, i);
    let mut tallies = vec![Tally::default(); embeddings.len()];
    for (e, ld) in embeddings.iter().enumerate() {
        let ld_d = sq_dists_from(ld, i);
        let t = &mut tallies[e];
        for j in (0..n).filter(|&j| j != i) {
            for l in (j + 1..n).filter(|&l| l != i) {
                t.record(hd_d[j] - hd_d[l], ld_d[j] - ld_d[l]);
            }
        }
    }
    tallies
}

fn sampled_point(
    hd: &Matrix<f32>,
    embeddings: &[&Matrix<f32>],
    i: usize,
    sampler: &TripletSampler,
) -> Vec<Tally> {
    let n = hd.rows();
    let mut rng = rng::stream(sampler.seed, tag::TRIPLETS, i as u64);
    let mut tallies = vec![Tally::default(); embeddings.len()];
    let (hq, hd_row) = (hd.row(i), |j: usize| hd.row(j));
    for _ in 0..sampler.triplets_per_point {
        // j uniform over the n-1 other points, l over the n-2 remaining
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let mut l = rng.random_range(0..n - 2);
        if l >= lo {
            l += 1;
        }
        if l >= hi {
            l += 1;
        }
        let hd_diff = sq_euclidean(hq, hd_row(j)) - sq_euclidean(hq, hd_row(l));
        for (t, ld) in tallies.iter_mut().zip(embeddings) {
            let q = ld.row(i);
            t.record(
                hd_diff,
                sq_euclidean(q, ld.row(j)) - sq_euclidean(q, ld.row(l)),
            );
        }
    }
    tallies
}
