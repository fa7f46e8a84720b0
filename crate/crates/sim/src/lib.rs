//! Deterministic discrete-event simulation of computing graphs.
//!
//! A computing graph is a directed multigraph whose nodes carry data
//! attributes and computing tasks, and whose edges communicate attribute
//! values with delays. Node and edge behavior is driven by per-entity state
//! managers reacting to action signals drawn from a global queue ordered by
//! (simulated time, sequence number). Every dispatch and state transition is
//! recorded as a trace event.
//!
//! ```
//! use graphkit_sim::{AttrValue, ComputingGraph, ComputeTime, BusyPolicy};
//!
//! let mut g = ComputingGraph::new();
//! let n = g.add_node("n1");
//! g.add_attribute(n, "x", AttrValue::Real(0.0)).unwrap();
//! let task = g
//!     .add_task(
//!         n,
//!         "bump",
//!         vec![],
//!         ComputeTime::Fixed(2.0),
//!         BusyPolicy::default(),
//!         Box::new(|ctx| {
//!             let x = ctx.get_real("x");
//!             ctx.update("x", x + 1.0);
//!             Ok(())
//!         }),
//!     )
//!     .unwrap();
//! g.schedule_trigger(task, 0.0).unwrap();
//! g.execute(Some(10.0)).unwrap();
//! assert_eq!(g.value(n, "x"), Some(&AttrValue::Real(1.0)));
//! ```

mod engine;
mod graph;
pub mod machine;
pub mod trace;
mod value;

pub use engine::EngineError;
pub use graph::{
    Attribute, BuildError, BusyPolicy, CommEdge, ComputeNode, ComputeTime, ComputingGraph, EdgeId,
    NodeId, NodeTask, SendOn, Status, Target, TaskCallback, TaskCtx, TaskId, Trigger,
};
pub use machine::{edge_transition, node_transition, EdgeState, NodeState, SignalKind};
pub use trace::{series_csv, AttrSample, Entity, EntityKind, TraceDocument, TraceEvent, TraceMeta};
pub use value::AttrValue;
