//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own stream, derived from the
//! root seed and a label (plus an optional index). Adding evaluation points or
//! episodes therefore never shifts the numbers seen by training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const COLLECT: &str = "collect";
pub const TRAIN: &str = "train";
pub const EVAL: &str = "eval";
pub const GOAL: &str = "goal";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    root: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { root: seed }
    }

    pub fn seed(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, label: &str) -> StreamRng {
        StreamRng::seed_from_u64(self.derive(label, 0))
    }

    pub fn indexed(&self, label: &str, index: u64) -> StreamRng {
        StreamRng::seed_from_u64(self.derive(label, index.wrapping_add(1)))
    }

    /// Seed for a nested set of streams, e.g. one per sweep configuration.
    pub fn child(&self, label: &str, index: u64) -> RngStreams {
        RngStreams::new(self.derive(label, index.wrapping_add(1) ^ 0xa5a5_a5a5_a5a5_a5a5))
    }

    fn derive(&self, label: &str, index: u64) -> u64 {
        let mut h = splitmix64(self.root ^ fnv1a(label));
        h = splitmix64(h ^ index);
        h
    }
}

/// Draws an index from a categorical distribution. Weights need not be
/// normalized; zero-weight entries are never returned.
pub fn sample_categorical(weights: &[f64], rng: &mut dyn rand::RngCore) -> usize {
    use rand::Rng;
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if u < w {
            return i;
        }
        u -= w;
        last = i;
    }
    last
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
