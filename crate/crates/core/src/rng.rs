//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, key, counter)`, so a Monte Carlo sample
//! depends only on its own index and never on how work is split across
//! threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Key space for rows that carry no PMU candidate label.
pub(crate) const UNLABELED_KEY_BASE: u64 = 1 << 40;
/// Keys reserved for the verification oracles.
pub(crate) const ORACLE_KEY_BASE: u64 = 1 << 41;

/// An independent ChaCha8 stream for `(seed, key, counter)`.
pub fn stream(seed: u64, key: u64, counter: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&key.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(counter);
    rng
}

/// Alive bitmask over `availability.len()` channels of candidate `key` in sample `sample`.
///
/// Channel `k` is alive when its uniform draw falls below its availability.
/// One draw is consumed per channel whatever the availability, so a channel's
/// fate does not depend on its neighbours' parameters.
pub fn channel_mask(seed: u64, key: u64, sample: u64, availability: &[f64]) -> u64 {
    assert!(availability.len() <= 64, "at most 64 channels per candidate");
    let mut rng = stream(seed, key, sample);
    availability.iter().enumerate().fold(0u64, |mask, (k, &a)| {
        let u: f64 = rng.random();
        if u < a {
            mask | 1 << k
        } else {
            mask
        }
    })
}
