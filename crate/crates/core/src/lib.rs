//! Classical proximal/splitting solvers for sparse inverse problems and their
//! trainable unrolled-network counterparts.
//!
//! The crate is self-contained: dense linear algebra, a deterministic PRNG, a
//! reverse-mode differentiation tape over the handful of primitives the
//! unrolled networks need, synthetic data generation, and a reproducible
//! training harness. Everything is seeded, so identical inputs give
//! bit-identical outputs.

pub mod checkpoint;
pub mod config;
pub mod container;
pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod iterative;
pub mod matrix;
pub mod metrics;
pub mod nets;
pub mod prox;
pub mod rng;
pub mod solvers;
pub mod svd;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::Rng;

/// Worker-thread budget from `URK_THREADS`; absent or unparsable means 1.
/// Parallelism never changes results: reductions stay in ascending sample
/// index.
pub fn worker_threads() -> usize {
    std::env::var("URK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(1)
}
