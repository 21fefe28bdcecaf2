//! Deterministic seed derivation.
//!
//! Every stochastic unit (a ranker, a tree, a fold plan) draws its own seed
//! from a path of labels below the run seed, so results never depend on the
//! order in which units are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree(u64);

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree(seed)
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn child(self, label: &str) -> SeedTree {
        let mut h = 0xcbf2_9ce4_8422_2325_u64;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        SeedTree(splitmix64(self.0 ^ splitmix64(h)))
    }

    pub fn index(self, i: u64) -> SeedTree {
        SeedTree(splitmix64(self.0.wrapping_add(splitmix64(i ^ 0x9e37_79b9_7f4a_7c15))))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
