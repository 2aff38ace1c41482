//! Simulation and exact computation for branching processes in random
//! environment with state-dependent immigration, and for the binary-tree
//! cell contamination model built on top of them.
//!
//! The crate is layered bottom-up:
//!
//! * [`offspring`] holds the laws: bivariate offspring mechanisms, their
//!   finite mixtures (the random environment), and contamination laws.
//! * [`lineage`] simulates the parasite count along a uniformly random cell
//!   line, a Markov chain on the nonnegative integers.
//! * [`tree`] simulates the whole cell population and summarises each
//!   generation.
//! * [`oracle`] computes exact laws on truncated state spaces, used as ground
//!   truth for the Monte Carlo paths.
//! * [`stats`] provides empirical measures and the comparators used by the
//!   acceptance suites in [`suites`].

pub mod config;
pub mod error;
pub mod lineage;
pub mod offspring;
pub mod oracle;
pub mod presets;
pub mod rng;
mod sampling;
pub mod stats;
pub mod suites;
pub mod tree;

pub use error::{Error, Result};

/// Largest representable parasite count. Sums that would exceed it saturate.
pub const MAX_STATE: u64 = (1 << 62) - 1;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
