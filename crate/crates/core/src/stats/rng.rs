//! Seeded, splittable random sources.
//!
//! Every stream is a ChaCha8 generator seeded from a 64-bit value. Child
//! sources are derived with a SplitMix64 finalizer over `(seed, index)`, so
//! per-gene streams depend only on the parent seed and the gene's position,
//! never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator type handed out by [`RandomSource::rng`].
pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> RandomSource {
        RandomSource { seed }
    }

    /// A fresh generator positioned at the start of this source's stream.
    pub fn rng(&self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Independent child source number `index`.
    pub fn split(&self, index: u64) -> RandomSource {
        let mixed = splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        RandomSource { seed: mixed }
    }

    /// Child source keyed by a label, e.g. a stage name.
    pub fn split_named(&self, label: &str) -> RandomSource {
        // FNV-1a over the label bytes
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.split(h)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
