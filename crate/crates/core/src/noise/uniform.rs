use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NoiseField;
use crate::params::NoiseKind;

/// `sgn(r)` for `r ~ U(-1, 1)^{d×d×3}`, with `sgn(0) = +1`.
pub fn uniform_random_field(side: usize, seed: u64) -> NoiseField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..side * side * 3)
        .map(|_| {
            let r: f64 = rng.random_range(-1.0..1.0);
            if r >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    NoiseField {
        kind: NoiseKind::Random,
        seed,
        side,
        channels: 3,
        params: None,
        values,
    }
}
