//! Per-point embedding quality measures.
//!
//! All measures are pure functions of immutable inputs, data-parallel over
//! points, and bit-identical for a fixed seed regardless of worker count.
//! Distance comparisons use squared distances from
//! [`crate::distance::sq_euclidean`]; orderings and ranks are unaffected by
//! the square root.

mod preservation;
mod rank;
mod selection;
mod stability;
mod triplets;

use crate::error::{Error, Result};

pub use preservation::{neighborhood_preservation, preservation_params};
pub use rank::{
    average_ranks, distance_rank_correlation, distance_rank_correlation_many, spearman_rho,
    AnchorSet, DEFAULT_MAX_ANCHORS,
};
pub use selection::{hd_distances_to_point, hd_neighbor_union};
pub use stability::{point_stability, stability_params};
pub use triplets::{
    triplet_accuracy, triplet_accuracy_many, TripletMode, TripletSampler,
    DEFAULT_TRIPLETS_PER_POINT, MAX_EXHAUSTIVE_PAIRS,
};

fn check_rows(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what: what.to_owned(),
            expected: format!("{expected} rows"),
            found: format!("{found} rows"),
        })
    }
}

/// Size of the intersection of two index lists without duplicates.
fn overlap(a: &[u32], b: &[u32], scratch: &mut Vec<u32>) -> usize {
    scratch.clear();
    scratch.extend_from_slice(a);
    scratch.sort_unstable();
    b.iter()
        .filter(|j| scratch.binary_search(j).is_ok())
        .count()
}
