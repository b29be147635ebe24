//! Counter-based stream derivation.
//!
//! Every random stream in the crate descends from a single root seed through
//! a chain of integer labels (run, box, stage, particle, ...). A key is a pure
//! function of the root and the label path, so the numbers a particle sees do
//! not depend on which worker executed it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Label namespaces used when deriving child keys. Distinct domains keep
/// e.g. "run 3" and "box 3" from colliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Run = 1,
    Box = 2,
    Stage = 3,
    Particle = 4,
    Resample = 5,
    Offspring = 6,
    Instance = 7,
    Extrapolation = 8,
    Attempt = 9,
    Launch = 10,
    Oracle = 11,
}

/// 64-bit stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(pub u64);

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix(seed.wrapping_add(GOLDEN)))
    }

    pub fn child(self, domain: Domain, index: u64) -> Self {
        let a = mix(self.0 ^ (domain as u64).wrapping_mul(GOLDEN));
        StreamKey(mix(a.wrapping_add(index.wrapping_mul(GOLDEN)).wrapping_add(0x632B_E59B_D9B4_E019)))
    }

    /// Sequential generator for the stream. Cloning the generator clones the
    /// cursor, which is how particle snapshots carry their position.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
