//! Low-rank recovery of graph-smooth, grossly corrupted data with joint
//! refinement of the feature graph.
//!
//! The pipeline: build an initial graph (k-NN similarity or coherence
//! connectivity), then alternate [`lowrank::solve_lowrank_step`] and
//! [`graph_update::solve_graph_step`] via [`graph_update::alternate`].

pub mod connectivity;
pub mod error;
pub mod eval;
pub mod graph;
pub mod graph_update;
pub mod io;
pub mod lowrank;
pub mod prox;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{Adjacency, Laplacian, Matrix};
