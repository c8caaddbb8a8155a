//! Seed splitting.
//!
//! Every random draw in the crate comes from a ChaCha8 generator. Child seeds
//! are the top 63 bits of the first output word of the parent generator on a
//! numbered stream, so `derive_seed(master, i)` is stable across platforms,
//! independent of the order in which children are requested, and fits the
//! signed integers of TOML files.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator for `seed` on the numbered `stream`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Largest seed that survives a round trip through a TOML file.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Child seed number `index` of `master`, at most [`MAX_SEED`].
pub fn derive_seed(master: u64, index: u64) -> u64 {
    stream(master, index).next_u64() >> 1
}
