//! Seed derivation for reproducible batch runs.
//!
//! A run is driven by a single master seed. Each independent random stream
//! (mixture generation, embedding noise, clustering init, silhouette sampling,
//! random selection) gets its own stream tag, and each trial within a stream
//! is addressed by a pair of counters:
//!
//! ```text
//! seed(master, stream, a, b) = mix(mix(mix(master ^ stream) + a) + b)
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Trials never share a generator, so
//! any subset of trials can be rerun in isolation and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_MIXTURE: u64 = 0x6d69_7874_7572_6531;
pub const STREAM_EMBED: u64 = 0x656d_6265_6464_696e;
pub const STREAM_CLUSTER: u64 = 0x636c_7573_7465_7273;
pub const STREAM_SAMPLE: u64 = 0x7361_6d70_6c65_7321;
pub const STREAM_SELECT: u64 = 0x7365_6c65_6374_696f;

/// SplitMix64 output function.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(master ^ stream).wrapping_add(a)).wrapping_add(b))
}

/// The generator used everywhere a seed is accepted.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
