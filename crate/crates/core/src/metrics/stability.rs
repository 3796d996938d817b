use rayon::prelude::*;
use serde_json::json;

use super::overlap;
use crate::error::{Error, Result};
use crate::model::{MetricColumn, MetricName, Params};
use crate::neighbors::NeighborGraph;

/// Mean pairwise Jaccard similarity of each point's `k` nearest neighbors
/// across embeddings: 1 means the neighborhood is the same everywhere.
pub fn point_stability(ld_graphs: &[&NeighborGraph], k: usize) -> Result<MetricColumn> {
    if ld_graphs.len() < 2 {
        return Err(Error::invalid(format!(
            "point stability needs at least 2 embeddings, got {}",
            ld_graphs.len()
        )));
    }
    let n = ld_graphs[0].n();
    for g in ld_graphs {
        super::check_rows("embedding neighbor graph", n, g.n())?;
        if k == 0 || k > g.k() {
            return Err(Error::KOutOfRange { k, max: g.k() });
        }
    }
    let e = ld_graphs.len();
    let pairs = e * (e - 1) / 2;
    let values = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let mut total = 0.0f64;
            for a in 0..e {
                for b in (a + 1)..e {
                    let inter = overlap(
                        ld_graphs[a].first_k(i, k),
                        ld_graphs[b].first_k(i, k),
                        scratch,
                    );
                    total += inter as f64 / (2 * k - inter) as f64;
                }
            }
            (total / pairs as f64) as f32
        })
        .collect();
    Ok(MetricColumn::new(
        MetricName::PointStability,
        stability_params(k, e),
        values,
    ))
}

pub fn stability_params(k: usize, embeddings: usize) -> Params {
    Params::from([
        ("k".to_owned(), json!(k)),
        ("embeddings".to_owned(), json!(embeddings)),
    ])
}
