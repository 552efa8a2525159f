//! Replicate seeding.
//!
//! Replicate `i` of experiment `label` under master seed `s` draws from
//! ChaCha8 keyed by `s ‖ fnv1a64(label) ‖ 0^16` on stream `i`. The generator
//! for a replicate depends only on that triple, so results do not depend on
//! which worker runs which replicate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeder {
    master: u64,
    label: String,
}

impl Seeder {
    pub fn new(master: u64, label: impl Into<String>) -> Self {
        Self {
            master,
            label: label.into(),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Seeder for a sub-experiment, labelled `<label>/<suffix>`.
    pub fn child(&self, suffix: &str) -> Self {
        Self {
            master: self.master,
            label: format!("{}/{suffix}", self.label),
        }
    }

    pub fn rng(&self, replicate: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&fnv1a64(self.label.as_bytes()).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replicate);
        rng
    }
}
