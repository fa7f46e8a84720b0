//! Graph-structured optimization modeling.
//!
//! The crate is organized in four layers:
//!
//! - [`hypergraph`]: graph containers (standard, hyper and directed
//!   multigraphs) with incidence matrices, hierarchy and k-way partitioning;
//! - [`expr`] and [`model`]: expression trees with forward-mode automatic
//!   differentiation and node-local component models;
//! - [`modelgraph`]: component models on nodes coupled by linear link
//!   constraints on hyperedges, aggregated into flattened problems;
//! - [`solvers`] and [`decomp`]: dense LU, two-phase simplex, Newton on the
//!   KKT system with block-bordered direct and Schur-complement solves, plus
//!   Lagrangian and Benders decomposition drivers.

pub mod decomp;
pub mod expr;
pub mod hypergraph;
pub mod model;
pub mod modelgraph;
pub mod solvers;

pub use expr::Expr;
pub use hypergraph::{EdgeId, Hypergraph, NodeId, Partition, SubgraphId, ROOT};
pub use model::ComponentModel;
pub use modelgraph::{FlattenedProblem, LinkConstraint, ModelGraph};
