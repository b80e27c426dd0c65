//! Seed derivation.
//!
//! Every random stream is derived from one 64-bit root seed through a path of
//! integer labels (stream kind, policy index, sample index, ...). Derivation
//! is a chain of SplitMix64 finalisers, so streams for different paths are
//! decorrelated and a partial re-run can rebuild any single stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Labels for the stream kinds used across the crate.
pub mod stream {
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const POLICY: u64 = 0x706f_6c69;
    pub const SAMPLE: u64 = 0x7361_6d70;
    pub const HISTORY: u64 = 0x6869_7374;
    pub const PROBE: u64 = 0x7072_6f62;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` along `path`.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &label| {
        splitmix64(acc ^ splitmix64(label))
    })
}

pub fn stream_rng(root: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, path))
}
