//! Seed fan-out.
//!
//! All randomness in the crate flows from one top-level `u64` seed. Each
//! stage that needs its own stream derives a stage seed as
//! `splitmix64(seed ^ fnv1a64(stage_name))` and feeds it to a ChaCha8
//! generator. The FNV hash keeps stage names order-independent and the
//! splitmix finalizer disperses nearby seeds, so `seed = 7 / "train"` and
//! `seed = 7 / "eval"` are unrelated streams while every run with the same
//! seed and stage name sees identical draws on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for a named stage from the top-level seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(stage.as_bytes()))
}

/// A deterministic generator for a named stage of a run.
pub fn stage_rng(seed: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stage_seed(seed, stage))
}
