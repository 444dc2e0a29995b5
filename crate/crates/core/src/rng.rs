//! Seed derivation so that every sample, batch and parameter tensor owns an independent stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` of `master`, further separated by a `domain` tag.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(master ^ mix64(domain)).wrapping_add(index))
}

pub fn stream(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, domain, index))
}

pub mod domain {
    pub const LAYOUT: u64 = 1;
    pub const SCENE: u64 = 2;
    pub const TEXT_ONLY: u64 = 3;
    pub const BACKGROUND: u64 = 4;
    pub const INIT: u64 = 5;
    pub const BATCH: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const FILM_INIT: u64 = 8;
    pub const STAGE: u64 = 9;
    pub const SAMPLE: u64 = 10;
    pub const AUGMENT: u64 = 11;
}
