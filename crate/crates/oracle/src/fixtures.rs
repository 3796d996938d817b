//! Random test instances and exactly representable rigid motions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n * d` values uniform in [-10, 10).
pub fn continuous(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<f32> {
    (0..n * d)
        .map(|_| rng.random_range(-10.0f32..10.0))
        .collect()
}

/// `n * d` integers in [-range, range]; small ranges give many distance ties.
pub fn lattice(rng: &mut ChaCha8Rng, n: usize, d: usize, range: i32) -> Vec<f32> {
    (0..n * d)
        .map(|_| rng.random_range(-range..=range) as f32)
        .collect()
}

/// Integer matrices that are a rotation (or reflection) times a positive
/// scale: axis swaps and Pythagorean-triple rotations.
const MATRICES: [[[i32; 2]; 2]; 10] = [
    [[1, 0], [0, 1]],
    [[0, -1], [1, 0]],
    [[-1, 0], [0, -1]],
    [[0, 1], [-1, 0]],
    [[1, 0], [0, -1]],
    [[0, 1], [1, 0]],
    [[3, -4], [4, 3]],
    [[5, -12], [12, 5]],
    [[8, -15], [15, 8]],
    [[4, 3], [3, -4]],
];

/// `x -> 2^scale_exp * (matrix x) + translation`, exact in f32 for lattice
/// inputs of moderate size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub matrix: [[i32; 2]; 2],
    pub scale_exp: i32,
    pub translation: [i32; 2],
}

impl RigidMotion {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            matrix: MATRICES[rng.random_range(0..MATRICES.len())],
            scale_exp: rng.random_range(-2..=3),
            translation: [
                rng.random_range(-1000..=1000),
                rng.random_range(-1000..=1000),
            ],
        }
    }

    /// Applies to row-major 2-D coordinates. Panics if a result is not
    /// exactly representable.
    pub fn apply(&self, coords: &[f32]) -> Vec<f32> {
        let s = 2f64.powi(self.scale_exp);
        let m = self.matrix;
        coords
            .chunks_exact(2)
            .flat_map(|p| {
                let (x, y) = (p[0] as f64, p[1] as f64);
                let out = [
                    s * (m[0][0] as f64 * x + m[0][1] as f64 * y) + self.translation[0] as f64,
                    s * (m[1][0] as f64 * x + m[1][1] as f64 * y) + self.translation[1] as f64,
                ];
                out.map(|v| {
                    let f = v as f32;
                    assert_eq!(f as f64, v, "rigid motion result {v} not exact in f32");
                    f
                })
            })
            .collect()
    }
}
