//! The single source of randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (a counter-based
//! generator) keyed by a 64-bit seed. Independent consumers of one seed use
//! distinct stream ids so that adding draws in one place never shifts
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod stream {
    pub const INIT: u64 = 1;
    pub const WORLD: u64 = 2;
    pub const DIALOGUES: u64 = 3;
    pub const LABEL_STRIP: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const BATCHES: u64 = 6;
    pub const DROPOUT: u64 = 7;
    pub const TEST: u64 = 99;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
