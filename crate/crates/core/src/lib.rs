//! Discriminative mutual-information estimators (MINE, NWJ, SMILE and the
//! DIME family) on a small reverse-mode differentiation core, plus
//! capacity-driven autoencoders trained with them over AWGN and Rayleigh
//! channels.

pub mod autoencoder;
pub mod channel;
pub mod diffcore;
pub mod error;
pub mod estimators;
pub mod evalharness;
pub mod exec;

pub use error::{Error, Result};

use rand::SeedableRng;

/// Random stream used everywhere. ChaCha keeps results reproducible across
/// platforms and releases.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
