//! Robust community recovery for sparse stochastic block models under
//! adversarial edge corruption.
//!
//! The pipeline samples a graph, optionally corrupts it, truncates high
//! degrees, builds `A^(l) H(t) A^(l)`, trims localized negative directions,
//! and rounds a random subspace of what survives into a labelling.

pub mod adversary;
pub mod error;
pub mod graph;
pub mod graphmat;
pub mod harness;
pub mod lp;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod robustpca;
pub mod rounding;
pub mod spectra;

pub use nalgebra;
pub use error::{Error, Result};
pub use graph::SparseGraph;
pub use matrix::{SparseSymMatrix, SymOperator};
pub use model::{Assignment, ModelParams, TransitionSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for `(seed, stream)`; distinct streams of one seed are
/// independent, so pipeline stages never share randomness.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
