//! Random substreams keyed by (seed, chunk, purpose).
//!
//! Every chunk of source slots owns four independent ChaCha8 streams, one
//! per pipeline stage. A chunk's output therefore depends only on the seed
//! and the chunk index, never on which worker processed it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pipeline stage that consumes a substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Source = 0,
    Routing = 1,
    Detection = 2,
    Dark = 3,
}

const PURPOSES: u64 = 4;

/// The generator for one (chunk, purpose) pair.
pub fn substream(seed: u64, chunk: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk * PURPOSES + purpose as u64);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` as a pure function of `(seed, index)`.
pub fn counter_uniform(seed: u64, index: u64) -> f64 {
    let h = splitmix64(splitmix64(seed ^ 0x5851_f42d_4c95_7f2d).wrapping_add(index));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
