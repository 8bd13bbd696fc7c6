//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream selected by
//! `(seed, stream)`, so a replicate can be regenerated in isolation and parallel
//! work gives the same numbers as sequential work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a tuple of indices (grid point, replicate, ...) into one stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6C61_7465_6E74_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
