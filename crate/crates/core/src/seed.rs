//! Seed splitting for reproducible parallel runs.
//!
//! Every episode gets its own RNG stream derived from a master seed by a
//! counter-based mix: `splitmix64(master ^ splitmix64(stream) + index)`. The
//! derivation depends only on the (master, stream, index) triple, so results
//! do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type EpisodeRng = ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for item `index` of stream `stream`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64((master ^ splitmix64(stream)).wrapping_add(index))
}

pub fn rng_from_seed(seed: u64) -> EpisodeRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named streams, so that scene layout and noise draws stay paired across
/// policies run on the same episode index.
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const PERCEPTION: u64 = 2;
    pub const EPISODE: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const CALIBRATION: u64 = 5;
    pub const SEE_TRIAL: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_distinct_across_streams_and_indices() {
        let mut seen = std::collections::HashSet::new();
        for stream in 0..8 {
            for index in 0..1000 {
                assert!(seen.insert(derive_seed(42, stream, index)));
            }
        }
    }

    #[test]
    fn derivation_is_stable() {
        assert_eq!(derive_seed(7, 1, 3), derive_seed(7, 1, 3));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(8, 1, 3));
    }
}
