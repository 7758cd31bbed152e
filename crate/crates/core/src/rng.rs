//! Hierarchical, named random streams.
//!
//! Every random draw in a run descends from one master seed. Child seeds are
//! derived by hashing the parent seed with a label and an index, so a stream
//! only depends on its path (`master / "world" / 3 / "location" / 1`), never on
//! how many draws another stream made or on the order jobs were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator used everywhere in the crate. ChaCha output is stable across
/// platforms and crate versions, which the byte-identical output contract needs.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream(splitmix64(master))
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    /// Child stream addressed by `label`.
    pub fn child(self, label: &str) -> Self {
        SeedStream(splitmix64(self.0 ^ splitmix64(fnv1a(label))))
    }

    /// Child stream addressed by `label` and an index.
    pub fn indexed(self, label: &str, index: u64) -> Self {
        let c = self.child(label);
        SeedStream(splitmix64(c.0 ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn rng(self) -> SimRng {
        SimRng::seed_from_u64(self.0)
    }
}
