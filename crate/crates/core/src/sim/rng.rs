//! Counter-based normal draws keyed by `(seed, stream, dimension)`.
//!
//! Each simulated path owns one ChaCha stream; dimension `d` of the path always
//! reads the same four 32-bit words, so a draw never depends on how many other
//! draws were consumed before it or on which thread generated the path.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const WORDS_PER_DIM: u128 = 4;
const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

pub struct PathRng {
    rng: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        PathRng { rng }
    }

    /// Standard normal variate for dimension `dim` (Box-Muller, cosine branch).
    pub fn normal(&mut self, dim: u64) -> f64 {
        let pos = dim as u128 * WORDS_PER_DIM;
        if self.rng.get_word_pos() != pos {
            self.rng.set_word_pos(pos);
        }
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = 1.0 - (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53;
        let u2 = (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Independent seed for member `k` of a multi-name bundle; member 0 keeps `seed`.
pub fn member_seed(seed: u64, member: usize) -> u64 {
    if member == 0 {
        return seed;
    }
    let mut z = seed.wrapping_add((member as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
