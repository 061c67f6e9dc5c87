//! Seeded input generators shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use sroc_core::harness::synthetic::clustered_rows;

/// `m × dim` rows uniform in `[-1, 1)`.
pub fn uniform_rows(m: usize, dim: usize, seed: u64) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, dim), |_| rng.random_range(-1.0..1.0))
}

/// `n × dim` f64 samples for covariance fitting.
pub fn gaussian_like(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, dim), |(_, j)| rng.random_range(-1.0..1.0) * (1.0 + j as f64 / dim as f64))
}

/// Score maps and masks for `images` square images of side `side`. Masks hold
/// one random rectangle each; scores are noise plus a bump over the rectangle.
pub fn maps_and_masks(images: usize, side: usize, seed: u64) -> (Vec<Array2<f64>>, Vec<Array2<bool>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(images);
    let mut masks = Vec::with_capacity(images);
    for _ in 0..images {
        let (t, l) = (rng.random_range(0..side / 2), rng.random_range(0..side / 2));
        let (h, w) = (rng.random_range(1..side / 2), rng.random_range(1..side / 2));
        let mask = Array2::from_shape_fn((side, side), |(i, j)| (t..t + h).contains(&i) && (l..l + w).contains(&j));
        let s = Array2::from_shape_fn((side, side), |(i, j)| {
            rng.random::<f64>() + if mask[[i, j]] { 0.5 } else { 0.0 }
        });
        scores.push(s);
        masks.push(mask);
    }
    (scores, masks)
}
