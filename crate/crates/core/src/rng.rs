//! Seeded random streams.
//!
//! Every stochastic component owns a [`ChaCha8Rng`] derived from a master seed
//! and a stream label, so runs are reproducible and the generator position can
//! be captured into checkpoints.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Well-known stream labels. Keeping them distinct keeps streams independent.
pub mod stream {
    pub const NETWORK_INIT: u64 = 1;
    pub const REPLAY: u64 = 2;
    pub const EXPLORATION: u64 = 3;
    pub const ENV: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const RESET: u64 = 6;
    pub const DEMOS: u64 = 7;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label))
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform draw in `[0, 1)`.
pub fn uniform<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Exact position of a ChaCha generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    /// Flattened to 32 + 8 + 16 bytes.
    pub fn to_bytes(&self) -> [u8; 56] {
        let mut out = [0u8; 56];
        out[..32].copy_from_slice(&self.seed);
        out[32..40].copy_from_slice(&self.stream.to_le_bytes());
        out[40..].copy_from_slice(&self.word_pos.to_le_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; 56]) -> Self {
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&b[..32]);
        let mut stream = [0u8; 8];
        stream.copy_from_slice(&b[32..40]);
        let mut pos = [0u8; 16];
        pos.copy_from_slice(&b[40..]);
        Self {
            seed,
            stream: u64::from_le_bytes(stream),
            word_pos: u128::from_le_bytes(pos),
        }
    }
}
