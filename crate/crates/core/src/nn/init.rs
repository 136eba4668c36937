use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::Matrix;

/// Portable, seedable generator used for every random draw in the crate.
pub type ModelRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ModelRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `[rows x cols]` matrix with entries from `N(0, std^2)`.
pub fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut ModelRng) -> Matrix {
    let dist = Normal::new(0.0, std).expect("standard deviation must be finite and positive");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}
