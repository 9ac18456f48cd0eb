//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! run seed and a stream id, so results do not depend on thread scheduling
//! or on the `rand` crate's unspecified `StdRng` algorithm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one logical stream of a seeded run.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for item `index` of stream `scope`, e.g. one image of an epoch.
pub fn substream(seed: u64, scope: u32, index: u32) -> ChaCha8Rng {
    stream(seed, (u64::from(scope) << 32) | u64::from(index))
}
