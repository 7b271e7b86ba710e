//! Seed derivation.
//!
//! Every random draw comes from a ChaCha8 stream whose 64-bit seed is
//! `mix(mix(seed ^ tag) ^ index)`, where `mix` is the SplitMix64 finalizer,
//! `tag` identifies the purpose of the stream and `index` is typically a case
//! number. The stream is then created with `ChaCha8Rng::seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams. The numeric values are part of the
/// reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    CaseSeed = 0x01,
    Geometry = 0x02,
    Intensity = 0x03,
    Noise = 0x04,
    GoldSelection = 0x05,
    Synthetic = 0x06,
    Oracle = 0x07,
    Mix = 0x08,
    Benchmark = 0x09,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ stream as u64) ^ index)
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

/// Stable 64-bit FNV-1a hash, for deriving indices from strings such as case ids.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
}
