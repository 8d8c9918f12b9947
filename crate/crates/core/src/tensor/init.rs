use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Scalar, Tensor};

/// Deterministic, platform-independent generator used everywhere a seed is given.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    fan_in: usize,
) -> Tensor<T> {
    assert!(rows > 0 && cols > 0 && fan_in > 0, "init_params needs positive dims");
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}
