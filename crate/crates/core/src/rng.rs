//! Seeded, splittable random streams.
//!
//! ChaCha is counter-based: a `(seed, stream)` pair addresses an independent
//! keystream, so per-trial generators never overlap and runs reproduce bit for
//! bit regardless of how trials are scheduled across threads.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Generator for stream `id` under `seed`.
pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derive a sub-seed, e.g. one per experiment block, from a parent seed.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
