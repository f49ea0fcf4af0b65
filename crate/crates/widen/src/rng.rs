//! Deterministic, independently keyed RNG streams.
//!
//! Every randomized step (sampling a node's wide set, each of its walks,
//! splits, weight init, epoch shuffles) draws from its own ChaCha stream
//! keyed by `(seed, a, b, c)`, so results do not depend on execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const ROLE_WIDE: u64 = 1;
pub(crate) const ROLE_DEEP: u64 = 2;
pub(crate) const ROLE_SPLIT: u64 = 3;
pub(crate) const ROLE_HOLDOUT: u64 = 4;
pub(crate) const ROLE_INIT: u64 = 5;
pub(crate) const ROLE_SHUFFLE: u64 = 6;
pub(crate) const ROLE_SYNTH: u64 = 7;

pub(crate) fn stream(seed: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&a.to_le_bytes());
    key[16..24].copy_from_slice(&b.to_le_bytes());
    key[24..32].copy_from_slice(&c.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
