//! Desk-scale solvers: dense/banded LU, two-phase simplex, and Newton on
//! block-bordered KKT systems with direct and Schur-complement solves.

pub mod kkt;
pub mod linalg;
pub mod simplex;

pub use kkt::{
    assemble_kkt, newton_kkt, solve_block, BlockKkt, KktError, KktNodeBlock, KktOptions,
    KktSolution, KktStep, SolveMethod,
};
pub use linalg::{lu_solve, BlockFactor, LinAlgError};
pub use simplex::{simplex_solve, LinearProgram, LpError, LpRow, LpSolution, LpStatus, Sense};
