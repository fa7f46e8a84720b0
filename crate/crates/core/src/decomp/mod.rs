//! Decomposition drivers over model graphs: Lagrangian dual decomposition,
//! synchronous Benders, and partition-to-hierarchy restructuring.

pub mod benders;
pub mod lagrangian;
pub mod restructure;

pub use benders::{
    benders_solve, BendersError, BendersIterate, BendersOptions, BendersOutcome, BendersState,
    BendersSubproblem, Cut,
};
pub use lagrangian::{
    lagrangian_solve, LagrangianError, LagrangianOptions, LagrangianOutcome, LagrangianState,
    LagrangianStatus,
};
pub use restructure::{apply_partition, RestructureError};
