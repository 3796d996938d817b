//! The one Euclidean kernel every module uses, so that neighbor graphs,
//! metrics and the kd-tree agree bit-for-bit on every comparison.

/// Squared Euclidean distance accumulated in f64.
///
/// Four independent partial sums over full chunks, then the tail in order.
/// The summation order depends only on the dimension, never on the caller.
#[inline]
pub fn sq_euclidean(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for lane in 0..4 {
            let d = x[lane] as f64 - y[lane] as f64;
            acc[lane] += d * d;
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        let d = *x as f64 - *y as f64;
        s += d * d;
    }
    s
}

#[inline]
pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    sq_euclidean(a, b).sqrt()
}
