//! Galton-Watson tree priors for Bayesian CART and BART.
//!
//! The crate covers the prior on binary tree partitions generated by a
//! depth-dependent branching process, analytic tail bounds on tree size,
//! k-d approximating partitions and their prior mass, and a BART sampler
//! with fixed noise variance.

pub mod bart;
pub mod branching;
pub mod data;
pub mod design;
pub mod error;
pub mod experiment;
pub mod kd;
pub mod prior;
pub mod schedule;
pub mod survival;
pub mod tree;

pub use design::Design;
pub use error::{Error, Result};
pub use schedule::{ScheduleKind, SplitSchedule};
pub use tree::{BinaryTreePartition, SplitRule, TreeMetrics};

/// Deterministic random stream used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
