//! Deterministic seed derivation.
//!
//! Every source of randomness in a run is a ChaCha stream whose seed is mixed
//! from the master seed, a purpose tag, and an index. Derivations are pure
//! integer arithmetic, so seeding is reproducible across platforms and runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag: per-environment world resets during training.
pub const STREAM_WORLD: u64 = 0x57_4F52_4C44;
/// Purpose tag: per-environment action sampling.
pub const STREAM_ACTION: u64 = 0x41_4354;
/// Purpose tag: parameter initialization.
pub const STREAM_INIT: u64 = 0x49_4E49_54;
/// Purpose tag: evaluation episodes.
pub const STREAM_EVAL: u64 = 0x45_5641_4C;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mix a master seed, a stream tag, and an index into one child seed.
pub fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ stream);
    splitmix64(h ^ index)
}

/// ChaCha generator for a derived stream.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream, index))
}
