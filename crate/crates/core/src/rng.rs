//! Counter-addressed random streams.
//!
//! Sample `i` of a stream keyed by `seed` always reads the same ChaCha8
//! keystream words, no matter how the index range is split into batches or
//! which thread evaluates a batch.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform `[0, 1)` draws addressed by `(seed, sample index)`.
#[derive(Clone, Debug)]
pub struct CounterRng {
    inner: ChaCha8Rng,
    words_per_sample: u128,
}

impl CounterRng {
    /// A stream whose samples each consist of `dims` uniforms.
    pub fn new(seed: u64, dims: usize) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            // next_u64 consumes two 32-bit words
            words_per_sample: 2 * dims.max(1) as u128,
        }
    }

    /// Positions the stream at the first uniform of sample `index`.
    pub fn seek(&mut self, index: u64) {
        self.inner.set_word_pos(index as u128 * self.words_per_sample);
    }

    /// Next uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Derives an independent sub-seed, e.g. one per experiment instance.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
