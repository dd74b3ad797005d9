//! Seeded parameter initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::TokenMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
    UniformScaled,
    Zeros,
    Ones,
}

/// Deterministic initialization recipe: same seed and scheme always produce
/// the same tensor for a given shape.
#[derive(Clone, Copy, Debug)]
pub struct InitSpec {
    pub seed: u64,
    pub scheme: InitScheme,
}

impl InitSpec {
    pub fn new(seed: u64, scheme: InitScheme) -> Self {
        InitSpec { seed, scheme }
    }

    /// Materializes a matrix from a fresh stream seeded by this spec. Fan-in
    /// and fan-out are taken from the shape.
    pub fn sample(&self, rows: usize, cols: usize) -> TokenMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        fill(&mut rng, self.scheme, rows, cols)
    }
}

/// Draws a matrix from an existing stream. Used when a whole model is
/// initialized from a single seed in declaration order.
pub fn fill(rng: &mut ChaCha8Rng, scheme: InitScheme, rows: usize, cols: usize) -> TokenMatrix {
    let n = rows * cols;
    let data = match scheme {
        InitScheme::Zeros => vec![0.0; n],
        InitScheme::Ones => vec![1.0; n],
        InitScheme::UniformScaled => {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        }
    };
    TokenMatrix::from_vec(rows, cols, data).expect("generated values are finite")
}
