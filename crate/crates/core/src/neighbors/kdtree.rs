//! Exact kd-tree k-NN for low-dimensional point sets (embeddings).
//!
//! Pruning uses the single-axis gap to the splitting plane. That gap,
//! squared in f64, never exceeds the squared distance `sq_euclidean`
//! computes for any point beyond the plane (rounding is monotone and all
//! summands are non-negative), and subtrees are only skipped when the gap is
//! strictly larger than the current k-th candidate. Results are therefore
//! identical to brute force, ties included.

use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::cmp_candidate;
use super::exact::flatten;
use crate::distance::sq_euclidean;
use crate::matrix::Matrix;

const LEAF_SIZE: usize = 16;
const MAX_DIM: usize = 4;

pub(super) fn worthwhile(points: &Matrix<f32>) -> bool {
    points.cols() <= MAX_DIM && points.rows() > 4 * LEAF_SIZE
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f32,
        left: usize,
        right: usize,
    },
}

pub(super) struct KdTree<'a> {
    points: &'a Matrix<f32>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Candidate(f64, u32);

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        cmp_candidate((self.0, self.1), (other.0, other.1))
    }
}

impl<'a> KdTree<'a> {
    pub(super) fn build(points: &'a Matrix<f32>) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.rows() as u32).collect(),
            nodes: Vec::new(),
        };
        tree.build_range(0, points.rows());
        tree
    }

    fn build_range(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let dim = self.points.cols();
        let mut lo = [f32::INFINITY; MAX_DIM];
        let mut hi = [f32::NEG_INFINITY; MAX_DIM];
        for &p in &self.order[start..end] {
            for (a, &v) in self.points.row(p as usize).iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let axis = (0..dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap_or(0);
        if hi[axis] - lo[axis] <= 0.0 {
            // all points coincide
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points
                .get(a as usize, axis)
                .total_cmp(&points.get(b as usize, axis))
                .then(a.cmp(&b))
        });
        let value = points.get(self.order[mid] as usize, axis);
        let left = self.build_range(start, mid);
        let right = self.build_range(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn search(&self, node: usize, query: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                let q = self.points.row(query);
                for &j in &self.order[start..end] {
                    if j as usize == query {
                        continue;
                    }
                    let c = Candidate(sq_euclidean(q, self.points.row(j as usize)), j);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let q = self.points.get(query, axis);
                let gap = q as f64 - value as f64;
                let (near, far) = if q < value {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, k, heap);
                let bound = if q == value { 0.0 } else { gap * gap };
                let visit = heap.len() < k || bound <= heap.peek().expect("heap is full").0;
                if visit {
                    self.search(far, query, k, heap);
                }
            }
        }
    }

    pub(super) fn knn_all(&self, k: usize) -> (Vec<u32>, Vec<f32>) {
        let rows: Vec<Vec<(f64, u32)>> = (0..self.points.rows())
            .into_par_iter()
            .map(|i| {
                let mut heap = BinaryHeap::with_capacity(k + 1);
                self.search(0, i, k, &mut heap);
                heap.into_sorted_vec()
                    .into_iter()
                    .map(|c| (c.0, c.1))
                    .collect()
            })
            .collect();
        flatten(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::super::exact::brute_force;
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_brute_force_with_many_ties() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        // integer lattice: lots of exactly equal distances and duplicate points
        let data: Vec<f32> = (0..2 * 500)
            .map(|_| rng.random_range(0..12) as f32)
            .collect();
        let points = Matrix::from_vec(500, 2, data);
        for k in [1, 7, 30] {
            assert_eq!(
                KdTree::build(&points).knn_all(k),
                brute_force(&points, k),
                "k={k}"
            );
        }
    }

    #[test]
    fn matches_brute_force_continuous_3d() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let data: Vec<f32> = (0..3 * 800)
            .map(|_| rng.random::<f32>() * 100.0 - 50.0)
            .collect();
        let points = Matrix::from_vec(800, 3, data);
        assert_eq!(KdTree::build(&points).knn_all(10), brute_force(&points, 10));
    }
}
