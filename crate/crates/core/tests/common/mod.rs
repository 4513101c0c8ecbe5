//! Helpers shared by the integration tests.
#![allow(dead_code, unused_imports)]

pub use ipower::selftest::{
    fd_gradient, params_in_ball, random_batch, random_params, relative_error, InstanceShape,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
