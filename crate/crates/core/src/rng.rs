//! Seed streams.
//!
//! Every experiment is driven by one 64-bit root seed. Each pipeline stage
//! draws from its own generator, keyed by `(stage, path)`, so that changing
//! how many numbers one stage consumes never shifts another stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Independent randomness consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Subset,
    Crosses,
    Init,
    Schedule,
    Search,
    Auxiliary,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Subset => 0x5355_4253,
            Stage::Crosses => 0x4352_4f53,
            Stage::Init => 0x494e_4954,
            Stage::Schedule => 0x5343_4844,
            Stage::Search => 0x5345_4152,
            Stage::Auxiliary => 0x4155_5849,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Root of a deterministic tree of generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Derived 64-bit seed for `stage` at `path` (e.g. `[sample, replica]`).
    pub fn derive(&self, stage: Stage, path: &[u64]) -> u64 {
        let mut h = splitmix64(self.root ^ splitmix64(stage.tag()));
        for &p in path {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
        }
        h
    }

    pub fn rng(&self, stage: Stage, path: &[u64]) -> StreamRng {
        StreamRng::seed_from_u64(self.derive(stage, path))
    }

    /// A subtree whose root is the seed derived at `(stage, path)`.
    pub fn child(&self, stage: Stage, path: &[u64]) -> SeedTree {
        SeedTree::new(self.derive(stage, path))
    }
}
