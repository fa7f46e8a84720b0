//! Three systems built on the model-graph and computing-graph layers: a gas
//! pipeline network with structural and Schur-decomposition analysis,
//! synchronous Benders simulated on virtual CPU architectures, and a
//! reactor-separator plant under centralized, decentralized and cooperative
//! MPC.

pub mod benders_cg;
pub mod gas;
pub mod mpc;
pub mod presets;
pub mod reactor;
pub mod resource;
