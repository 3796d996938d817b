use rayon::prelude::*;
use serde_json::json;

use super::overlap;
use crate::error::{Error, Result};
use crate::model::{MetricColumn, MetricName, Params};
use crate::neighbors::{Exactness, NeighborGraph};

/// Fraction of each point's `k` HD neighbors that are also among its `k`
/// embedding neighbors.
pub fn neighborhood_preservation(
    hd_graph: &NeighborGraph,
    ld_graph: &NeighborGraph,
    k: usize,
) -> Result<MetricColumn> {
    let max = hd_graph.k().min(ld_graph.k());
    if k == 0 || k > max {
        return Err(Error::KOutOfRange { k, max });
    }
    super::check_rows("embedding neighbor graph", hd_graph.n(), ld_graph.n())?;
    let values: Vec<f32> = (0..hd_graph.n())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let shared = overlap(hd_graph.first_k(i, k), ld_graph.first_k(i, k), scratch);
            (shared as f64 / k as f64) as f32
        })
        .collect();
    let params = preservation_params(k, hd_graph.exactness(), ld_graph.exactness());
    Ok(MetricColumn::new(
        MetricName::NeighborhoodPreservation,
        params,
        values,
    ))
}

pub fn preservation_params(k: usize, hd: Exactness, ld: Exactness) -> Params {
    Params::from([
        ("k".to_owned(), json!(k)),
        ("hd_exactness".to_owned(), json!(hd.as_str())),
        ("ld_exactness".to_owned(), json!(ld.as_str())),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::neighbors::build_exact_knn;
    use crate::synth::{LINE4_HD, LINE4_LD};

    fn graphs() -> (NeighborGraph, NeighborGraph) {
        let hd = Matrix::from_vec(4, 1, LINE4_HD.to_vec());
        let ld = Matrix::from_vec(4, 1, LINE4_LD.to_vec());
        (
            build_exact_knn(&hd, 3).unwrap(),
            build_exact_knn(&ld, 3).unwrap(),
        )
    }

    #[test]
    fn line4_k1() {
        let (hd, ld) = graphs();
        let col = neighborhood_preservation(&hd, &ld, 1).unwrap();
        assert_eq!(col.values, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(col.params["k"], json!(1));
        assert_eq!(col.params["hd_exactness"], json!("exact"));
    }

    #[test]
    fn identical_graphs_preserve_everything() {
        let (hd, _) = graphs();
        for k in 1..=3 {
            let col = neighborhood_preservation(&hd, &hd, k).unwrap();
            assert!(col.values.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn k_beyond_stored_graph() {
        let (hd, ld) = graphs();
        let small = ld.prefix(2).unwrap();
        assert!(matches!(
            neighborhood_preservation(&hd, &small, 3),
            Err(Error::KOutOfRange { k: 3, max: 2 })
        ));
    }
}
