//! Seedable, hierarchically splittable random streams.
//!
//! A stream is named by a 64-bit run seed plus a path of indices
//! (run → stick → observation, or any other nesting). The ChaCha key is the
//! SHA-256 digest of the seed and path, so two distinct paths give unrelated
//! key material and the same `(seed, path)` always reproduces the same
//! sequence regardless of which thread consumes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, path: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Stream one level further down the hierarchy.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self { seed: self.seed, path }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"pasb-stream");
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for p in &self.path {
            hasher.update(p.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}
