//! State managers for compute nodes and communication edges.
//!
//! Nodes cycle idle -> executing_task -> finalized_task -> idle; edges cycle
//! idle -> communicating -> all_received -> idle. Attribute signals and
//! repeated triggers are self-transitions, which lets updates arrive during
//! task execution or while an edge still has deliveries in flight. A signal
//! with no transition from the current state is ignored and logged, never an
//! error.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Idle,
    ExecutingTask,
    FinalizedTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeState {
    Idle,
    Communicating,
    AllReceived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    ExecuteTask,
    FinalizeTask,
    BackToIdle,
    AttributeUpdated,
    AttributeReceived,
    Communicate,
    AttributeSent,
    AllReceived,
    Stop,
}

/// Node transition mapping. `None` means the signal is ignored in this state.
pub fn node_transition(state: NodeState, signal: SignalKind) -> Option<NodeState> {
    use NodeState::*;
    use SignalKind::*;
    match (state, signal) {
        (Idle, ExecuteTask) => Some(ExecutingTask),
        (ExecutingTask, FinalizeTask) => Some(FinalizedTask),
        (FinalizedTask, BackToIdle) => Some(Idle),
        // busy trigger: stays put, the task is queued or dropped
        (ExecutingTask, ExecuteTask) => Some(ExecutingTask),
        (FinalizedTask, ExecuteTask) => Some(FinalizedTask),
        // attribute signals are trigger-evaluation events, not state changes
        (s, AttributeUpdated) | (s, AttributeReceived) => Some(s),
        _ => None,
    }
}

/// Edge transition mapping; mirrors the node mapping.
pub fn edge_transition(state: EdgeState, signal: SignalKind) -> Option<EdgeState> {
    match (state, signal) {
        (EdgeState::Idle, SignalKind::Communicate) => Some(EdgeState::Communicating),
        // overlapping in-flight sends loop back to communicating
        (EdgeState::Communicating, SignalKind::Communicate) => Some(EdgeState::Communicating),
        (EdgeState::Communicating, SignalKind::AttributeSent) => Some(EdgeState::Communicating),
        (EdgeState::Communicating, SignalKind::AttributeReceived) => {
            Some(EdgeState::Communicating)
        }
        (EdgeState::Communicating, SignalKind::AllReceived) => Some(EdgeState::AllReceived),
        (EdgeState::AllReceived, SignalKind::BackToIdle) => Some(EdgeState::Idle),
        _ => None,
    }
}

impl NodeState {
    pub fn name(&self) -> &'static str {
        match self {
            NodeState::Idle => "idle",
            NodeState::ExecutingTask => "executing_task",
            NodeState::FinalizedTask => "finalized_task",
        }
    }
}

impl EdgeState {
    pub fn name(&self) -> &'static str {
        match self {
            EdgeState::Idle => "idle",
            EdgeState::Communicating => "communicating",
            EdgeState::AllReceived => "all_received",
        }
    }
}

impl SignalKind {
    pub fn name(&self) -> &'static str {
        match self {
            SignalKind::ExecuteTask => "execute_task",
            SignalKind::FinalizeTask => "finalize_task",
            SignalKind::BackToIdle => "back_to_idle",
            SignalKind::AttributeUpdated => "attribute_updated",
            SignalKind::AttributeReceived => "attribute_received",
            SignalKind::Communicate => "communicate",
            SignalKind::AttributeSent => "attribute_sent",
            SignalKind::AllReceived => "all_received",
            SignalKind::Stop => "stop",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_node_cycle() {
        assert_eq!(
            node_transition(NodeState::Idle, SignalKind::ExecuteTask),
            Some(NodeState::ExecutingTask)
        );
        assert_eq!(
            node_transition(NodeState::ExecutingTask, SignalKind::FinalizeTask),
            Some(NodeState::FinalizedTask)
        );
        assert_eq!(
            node_transition(NodeState::FinalizedTask, SignalKind::BackToIdle),
            Some(NodeState::Idle)
        );
        assert_eq!(node_transition(NodeState::Idle, SignalKind::FinalizeTask), None);
    }

    #[test]
    fn core_edge_cycle() {
        assert_eq!(
            edge_transition(EdgeState::Idle, SignalKind::Communicate),
            Some(EdgeState::Communicating)
        );
        assert_eq!(
            edge_transition(EdgeState::Communicating, SignalKind::AllReceived),
            Some(EdgeState::AllReceived)
        );
        assert_eq!(
            edge_transition(EdgeState::AllReceived, SignalKind::BackToIdle),
            Some(EdgeState::Idle)
        );
        assert_eq!(edge_transition(EdgeState::Idle, SignalKind::AllReceived), None);
    }
}
