//! Seeded, hierarchically derived random streams.
//!
//! Every randomised operation receives an explicit stream. Streams are
//! derived from a root seed and a path of integer keys, so the stream used
//! for, say, prior sample 17 of evaluation 3 does not depend on the order in
//! which work is scheduled.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

/// Concrete generator used by every stream.
pub type StreamRng = Xoshiro256PlusPlus;

/// Well-known first path components, one per consumer.
pub mod tags {
    pub const PRIOR_BANK: u64 = 1;
    pub const MARGINAL: u64 = 2;
    pub const PER_SAMPLE: u64 = 3;
    pub const EVALUATION: u64 = 4;
    pub const BO: u64 = 5;
    pub const OBSERVATION: u64 = 6;
    pub const RESAMPLE: u64 = 7;
    pub const BASELINE: u64 = 8;
    pub const ANALYTIC: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    /// Seed of the child stream identified by `key`.
    pub fn child(self, key: u64) -> Self {
        let mixed = splitmix64(self.0 ^ splitmix64(key.wrapping_add(0xA076_1D64_78BD_642F)));
        Self(splitmix64(mixed))
    }

    /// Seed reached by following `path` from this seed.
    pub fn derive(self, path: &[u64]) -> Self {
        path.iter().fold(self, |s, &k| s.child(k))
    }

    /// Generator for the stream at `path` below this seed.
    pub fn stream(self, path: &[u64]) -> StreamRng {
        StreamRng::seed_from_u64(self.derive(path).0)
    }

    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }
}
