//! Portable per-sample random streams.
//!
//! Each sample draws from its own ChaCha20 stream whose 256-bit key is
//! `SHA-256(seed as u64 LE || seg_id byte length as u64 LE || seg_id bytes || sample_index as u64 LE)`.
//! Uniform reals take the top 53 bits of `next_u64`. Both steps are fully
//! specified, so outputs do not depend on platform or scheduling.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

pub struct SampleRng(ChaCha20Rng);

impl SampleRng {
    pub fn derive(seed: u64, seg_id: &str, sample_index: usize) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((seg_id.len() as u64).to_le_bytes());
        h.update(seg_id.as_bytes());
        h.update((sample_index as u64).to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        SampleRng(ChaCha20Rng::from_seed(key))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
