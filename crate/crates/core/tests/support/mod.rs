//! Generators and brute-force oracles shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

pub mod adql_gen;
pub mod fits_gen;
pub mod oracle;
pub mod pipelines;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
