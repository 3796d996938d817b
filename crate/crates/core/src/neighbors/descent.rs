//! Neighbor descent: iterative local-join refinement of a random k-NN graph.
//!
//! Each iteration samples "new" and "old" candidate lists per point (forward
//! and reverse neighbors, chosen by a keyed random priority), then joins
//! candidates pairwise. Join proposals are produced for a fixed-size block of
//! points against the graph as it stood at the start of the block, grouped
//! by target row, sorted, and applied. Block boundaries and all random
//! choices depend only on the inputs and the seed, so the result is the same
//! for any number of worker threads.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;

use super::cmp_candidate;
use crate::distance::sq_euclidean;
use crate::matrix::Matrix;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct DescentParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once an iteration changes fewer than `delta * n * k` entries.
    pub delta: f64,
    /// Cap on sampled new/old candidates per point and iteration.
    pub max_candidates: usize,
    /// Points whose joins are generated against one graph snapshot.
    pub block_size: usize,
}

impl DescentParams {
    pub fn for_recall(k: usize, recall_target: f64, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 20,
            delta: 0.02 * (1.0 - recall_target),
            max_candidates: k.clamp(20, 60),
            block_size: 512,
        }
    }
}

struct Graph {
    k: usize,
    idx: Vec<u32>,
    dist: Vec<f64>,
    fresh: Vec<bool>,
}

/// Inserts `(d, j)` into a sorted row if it beats the current worst entry
/// and is not already present.
fn insert(idx: &mut [u32], dist: &mut [f64], fresh: &mut [bool], d: f64, j: u32) -> bool {
    let k = idx.len();
    if cmp_candidate((d, j), (dist[k - 1], idx[k - 1])) != Ordering::Less {
        return false;
    }
    let (mut lo, mut hi) = (0, k);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if cmp_candidate((dist[mid], idx[mid]), (d, j)) == Ordering::Less {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    // sq_euclidean is symmetric and deterministic, so an existing entry for
    // j carries exactly d and sits at lo
    if idx[lo] == j {
        return false;
    }
    idx.copy_within(lo..k - 1, lo + 1);
    dist.copy_within(lo..k - 1, lo + 1);
    fresh.copy_within(lo..k - 1, lo + 1);
    idx[lo] = j;
    dist[lo] = d;
    fresh[lo] = true;
    true
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed random priority of the edge (v, u) in one iteration.
#[inline]
fn priority(key: u64, v: u32, u: u32) -> u32 {
    (mix(key ^ mix(((v as u64) << 32) | u as u64)) >> 32) as u32
}

fn random_init(points: &Matrix<f32>, k: usize, seed: u64) -> Graph {
    let n = points.rows();
    let mut idx = vec![u32::MAX; n * k];
    let mut dist = vec![f64::INFINITY; n * k];
    let mut fresh = vec![true; n * k];
    idx.par_chunks_mut(k)
        .zip(dist.par_chunks_mut(k))
        .zip(fresh.par_chunks_mut(k))
        .enumerate()
        .for_each(|(i, ((ri, rd), rf))| {
            let mut rng = rng::stream(seed, tag::DESCENT_INIT, i as u64);
            let q = points.row(i);
            let mut filled = 0;
            while filled < k {
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                if insert(ri, rd, rf, sq_euclidean(q, points.row(j)), j as u32) {
                    filled += 1;
                }
            }
        });
    Graph {
        k,
        idx,
        dist,
        fresh,
    }
}

/// Sampled (new, old) candidate lists for every point, forward and reverse.
fn sample_candidates(
    g: &mut Graph,
    key: u64,
    max_candidates: usize,
) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let n = g.idx.len() / g.k;
    let k = g.k;
    let mut counts = vec![0usize; n + 1];
    for (pos, &u) in g.idx.iter().enumerate() {
        counts[pos / k] += 1;
        counts[u as usize] += 1;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut acc = 0;
    for c in &counts[..n] {
        offsets.push(acc);
        acc += c;
    }
    offsets.push(acc);
    let mut fill = offsets.clone();
    // (priority, id, fresh)
    let mut entries = vec![(0u32, 0u32, false); acc];
    for (pos, (&u, &f)) in g.idx.iter().zip(&g.fresh).enumerate() {
        let v = (pos / k) as u32;
        let p = priority(key, v, u);
        entries[fill[v as usize]] = (p, u, f);
        fill[v as usize] += 1;
        entries[fill[u as usize]] = (p, v, f);
        fill[u as usize] += 1;
    }

    let pick = |list: &mut Vec<(u32, u32)>| -> Vec<u32> {
        list.sort_unstable_by_key(|&(p, id)| (id, p));
        list.dedup_by_key(|e| e.1);
        list.sort_unstable();
        list.iter()
            .take(max_candidates)
            .map(|&(_, id)| id)
            .collect()
    };
    let lists: Vec<(Vec<u32>, Vec<u32>)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let slice = &entries[offsets[t]..offsets[t + 1]];
            let mut new: Vec<(u32, u32)> =
                slice.iter().filter(|e| e.2).map(|e| (e.0, e.1)).collect();
            let mut old: Vec<(u32, u32)> =
                slice.iter().filter(|e| !e.2).map(|e| (e.0, e.1)).collect();
            (pick(&mut new), pick(&mut old))
        })
        .collect();
    let (new, old): (Vec<_>, Vec<_>) = lists.into_iter().unzip();

    // sampled forward entries have now been joined once
    g.idx
        .par_chunks(k)
        .zip(g.fresh.par_chunks_mut(k))
        .enumerate()
        .for_each(|(v, (ri, rf))| {
            for (u, f) in ri.iter().zip(rf.iter_mut()) {
                if *f && new[v].contains(u) {
                    *f = false;
                }
            }
        });
    (new, old)
}

/// `(d, j)` would enter row `t`.
#[inline]
fn improves(g: &Graph, t: u32, d: f64, j: u32) -> bool {
    let last = (t as usize + 1) * g.k - 1;
    cmp_candidate((d, j), (g.dist[last], g.idx[last])) == Ordering::Less
}

fn local_join(
    points: &Matrix<f32>,
    g: &mut Graph,
    new: &[Vec<u32>],
    old: &[Vec<u32>],
    block_size: usize,
) -> usize {
    let n = points.rows();
    let mut changed = 0;
    let mut counts = vec![0usize; n];
    for start in (0..n).step_by(block_size) {
        let end = (start + block_size).min(n);
        let snapshot = &*g;
        let proposals: Vec<(u32, u32, f64)> = (start..end)
            .into_par_iter()
            .flat_map_iter(|v| {
                let (nv, ov) = (&new[v], &old[v]);
                let mut out = Vec::new();
                let mut consider = |a: u32, b: u32| {
                    let d = sq_euclidean(points.row(a as usize), points.row(b as usize));
                    if improves(snapshot, a, d, b) {
                        out.push((a, b, d));
                    }
                    if improves(snapshot, b, d, a) {
                        out.push((b, a, d));
                    }
                };
                for (pos, &a) in nv.iter().enumerate() {
                    for &b in &nv[pos + 1..] {
                        consider(a, b);
                    }
                    for &b in ov {
                        if a != b {
                            consider(a, b);
                        }
                    }
                }
                out
            })
            .collect();
        if proposals.is_empty() {
            continue;
        }

        counts.iter_mut().for_each(|c| *c = 0);
        for &(t, _, _) in &proposals {
            counts[t as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for &c in &counts {
            offsets.push(acc);
            acc += c;
        }
        offsets.push(acc);
        let mut grouped = vec![(0.0f64, 0u32); acc];
        let mut fill = offsets.clone();
        for &(t, j, d) in &proposals {
            grouped[fill[t as usize]] = (d, j);
            fill[t as usize] += 1;
        }

        changed += apply_grouped(g, &mut grouped, &offsets);
    }
    changed
}

fn apply_grouped(g: &mut Graph, grouped: &mut [(f64, u32)], offsets: &[usize]) -> usize {
    let k = g.k;
    // hand each row its own disjoint slice of proposals
    let mut slices: Vec<&mut [(f64, u32)]> = Vec::with_capacity(offsets.len() - 1);
    let mut rest = grouped;
    for w in offsets.windows(2) {
        let (head, tail) = rest.split_at_mut(w[1] - w[0]);
        slices.push(head);
        rest = tail;
    }
    g.idx
        .par_chunks_mut(k)
        .zip(g.dist.par_chunks_mut(k))
        .zip(g.fresh.par_chunks_mut(k))
        .zip(slices.into_par_iter())
        .map(|(((ri, rd), rf), props)| {
            if props.is_empty() {
                return 0;
            }
            props.sort_unstable_by(|a, b| cmp_candidate(*a, *b));
            props
                .iter()
                .filter(|&&(d, j)| insert(ri, rd, rf, d, j))
                .count()
        })
        .sum()
}

pub(super) fn nn_descent(points: &Matrix<f32>, params: &DescentParams) -> (Vec<u32>, Vec<f32>) {
    let n = points.rows();
    let k = params.k;
    let mut g = random_init(points, k, params.seed);
    let threshold = params.delta * (n * k) as f64;
    for iter in 0..params.max_iters {
        let key = mix(params.seed ^ mix(tag::DESCENT_SAMPLE + iter as u64));
        let (new, old) = sample_candidates(&mut g, key, params.max_candidates);
        let changed = local_join(points, &mut g, &new, &old, params.block_size);
        tracing::debug!(iter, changed, "neighbor descent iteration");
        if (changed as f64) <= threshold {
            break;
        }
    }
    let distances = g.dist.iter().map(|&d| d.sqrt() as f32).collect();
    (g.idx, distances)
}
