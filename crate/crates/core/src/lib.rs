//! Finite windows of horocyclic products of bond-percolation trees.
//!
//! * [`tree`]: percolation subtrees of regular trees with a fixed end,
//!   sampled from counter-based bits ([`bits`]).
//! * [`horo`]: explicit horocyclic products of two windows.
//! * [`iso`]: exact boundaries, isoperimetric ratios and the related checks.
//! * [`stats`]: counts-only branching simulation and Monte Carlo experiments.

pub mod bits;
pub mod error;
pub mod horo;
pub mod iso;
pub mod stats;
pub mod tree;

pub use bits::{BitSource, EdgeAddress, VertexAddress};
pub use error::{HoroError, Result};
pub use tree::{LevelCounts, LeveledTree, NodeId, TreeParams};

/// Exact ratio type used for every boundary/volume quotient.
pub type Exact = num_rational::Ratio<u128>;
