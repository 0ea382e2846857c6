//! Network-structure experiments for a cumulative-innovation agent model.
//!
//! * [`graph`]: immutable undirected simple graphs.
//! * [`sbm`]: two-block stochastic block models and their linear families.
//! * [`abm`]: the item-combination innovation model run on a graph.
//! * [`spectral`]: adjacency / normalized-Laplacian embeddings and
//!   density-adjusted random dot product resampling.
//! * [`stats`]: discovery-time summaries and the 1-D earth mover's distance.
//! * [`experiments`]: seeded parameter sweeps with CSV/JSON output.

pub mod abm;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod sbm;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use graph::Graph;
