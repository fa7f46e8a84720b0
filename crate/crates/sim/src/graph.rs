//! Computing graph construction: nodes with attributes and tasks, directed
//! communication edges with delays, and the global signal queue.

use crate::machine::{EdgeState, NodeState, SignalKind};
use crate::trace::{AttrSample, TraceEvent};
use crate::value::AttrValue;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::cmp::Reverse;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskId {
    pub node: NodeId,
    pub index: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("unknown node id {0:?}")]
    UnknownNode(NodeId),
    #[error("node `{node}` already has attribute `{attr}`")]
    DuplicateAttribute { node: String, attr: String },
    #[error("node `{node}` has no attribute `{attr}`")]
    UnknownAttribute { node: String, attr: String },
    #[error("bad edge: {0}")]
    BadEdgeSpec(String),
    #[error("times must be finite and nonnegative")]
    BadTime,
}

#[derive(Debug, Clone)]
pub struct Attribute {
    pub name: String,
    pub value: AttrValue,
    pub last_updated: f64,
    pub last_received: f64,
}

/// What starts a task: receipt or commit of any of the listed attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger {
    Received(Vec<String>),
    Updated(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComputeTime {
    /// Measured host execution time of the callback.
    Walltime,
    /// Fixed simulated duration.
    Fixed(f64),
    /// The callback supplies the duration via its context.
    FromCallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusyPolicy {
    /// Queue the trigger until the node is idle; at most `capacity` pending
    /// instances of the same task are kept (extra triggers coalesce).
    Queue { capacity: usize },
    Drop,
}

impl Default for BusyPolicy {
    fn default() -> Self {
        BusyPolicy::Queue { capacity: 1 }
    }
}

pub type TaskCallback = Box<dyn FnMut(&mut TaskCtx) -> Result<(), String>>;

pub struct NodeTask {
    pub name: String,
    pub(crate) callback: Option<TaskCallback>,
    pub triggers: Vec<Trigger>,
    pub compute_time: ComputeTime,
    pub busy_policy: BusyPolicy,
}

pub(crate) struct RunningTask {
    pub task: usize,
    pub staged: Vec<(usize, AttrValue)>,
}

pub struct ComputeNode {
    pub name: String,
    pub attrs: Vec<Attribute>,
    pub(crate) attr_lookup: BTreeMap<String, usize>,
    pub tasks: Vec<NodeTask>,
    pub state: NodeState,
    pub local_clock: f64,
    pub(crate) pending: VecDeque<usize>,
    pub(crate) running: Option<RunningTask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOn {
    /// Communicate whenever the source attribute commits an update.
    Updated,
    /// Communicate on the edge's own schedule (`start`, then every
    /// `send_wait`).
    Sent,
}

pub struct CommEdge {
    pub name: String,
    pub source: (NodeId, usize),
    pub dests: Vec<(NodeId, usize)>,
    pub delay: f64,
    pub send_on: SendOn,
    pub send_wait: Option<f64>,
    pub start: f64,
    pub state: EdgeState,
    pub(crate) in_flight: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ready,
    Stopped,
    HorizonReached,
    Quiescent,
    /// The per-run event budget ran out before the queue drained.
    EventLimit,
    Failed,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Ready => "ready",
            Status::Stopped => "stopped",
            Status::HorizonReached => "horizon_reached",
            Status::Quiescent => "quiescent",
            Status::EventLimit => "event_limit",
            Status::Failed => "failed",
        }
    }
}

/// Where a signal is routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Task(TaskId),
    Node(NodeId),
    Edge(EdgeId),
    /// Delivery of an in-flight value to one destination of an edge.
    Delivery { edge: EdgeId, dest: usize },
    Graph,
}

#[derive(Debug, Clone)]
pub(crate) struct Signal {
    pub time: f64,
    pub seq: u64,
    pub kind: SignalKind,
    pub target: Target,
    pub payload: Option<AttrValue>,
    /// For attribute signals: the attribute index on the target node.
    pub attr: Option<usize>,
}

pub(crate) struct OrdSignal(pub Signal);

impl PartialEq for OrdSignal {
    fn eq(&self, other: &Self) -> bool {
        self.0.time == other.0.time && self.0.seq == other.0.seq
    }
}
impl Eq for OrdSignal {}
impl PartialOrd for OrdSignal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdSignal {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .time
            .total_cmp(&other.0.time)
            .then(self.0.seq.cmp(&other.0.seq))
    }
}

/// Directed multigraph of compute nodes and communication edges driven by a
/// global (time, seq)-ordered signal queue.
pub struct ComputingGraph {
    pub(crate) nodes: Vec<ComputeNode>,
    pub(crate) edges: Vec<CommEdge>,
    /// outgoing Updated-edges per (node, attr)
    pub(crate) updated_edges: BTreeMap<(usize, usize), Vec<usize>>,
    pub(crate) queue: BinaryHeap<Reverse<OrdSignal>>,
    pub(crate) seq: u64,
    pub clock: f64,
    pub status: Status,
    pub(crate) trace: Vec<TraceEvent>,
    pub(crate) trace_seq: u64,
    pub(crate) attr_log: Vec<AttrSample>,
    pub(crate) stop_requested: bool,
}

impl Default for ComputingGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl ComputingGraph {
    pub fn new() -> Self {
        ComputingGraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            updated_edges: BTreeMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            clock: 0.0,
            status: Status::Ready,
            trace: Vec::new(),
            trace_seq: 0,
            attr_log: Vec::new(),
            stop_requested: false,
        }
    }

    pub fn add_node(&mut self, name: &str) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(ComputeNode {
            name: name.to_string(),
            attrs: Vec::new(),
            attr_lookup: BTreeMap::new(),
            tasks: Vec::new(),
            state: NodeState::Idle,
            local_clock: 0.0,
            pending: VecDeque::new(),
            running: None,
        });
        id
    }

    pub fn add_attribute(
        &mut self,
        node: NodeId,
        name: &str,
        start: AttrValue,
    ) -> Result<(), BuildError> {
        let n = self
            .nodes
            .get_mut(node.0)
            .ok_or(BuildError::UnknownNode(node))?;
        if n.attr_lookup.contains_key(name) {
            return Err(BuildError::DuplicateAttribute {
                node: n.name.clone(),
                attr: name.to_string(),
            });
        }
        n.attr_lookup.insert(name.to_string(), n.attrs.len());
        n.attrs.push(Attribute {
            name: name.to_string(),
            value: start,
            last_updated: 0.0,
            last_received: 0.0,
        });
        Ok(())
    }

    pub fn add_task(
        &mut self,
        node: NodeId,
        name: &str,
        triggers: Vec<Trigger>,
        compute_time: ComputeTime,
        busy_policy: BusyPolicy,
        callback: TaskCallback,
    ) -> Result<TaskId, BuildError> {
        if let ComputeTime::Fixed(d) = compute_time {
            if !d.is_finite() || d < 0.0 {
                return Err(BuildError::BadTime);
            }
        }
        let node_ref = self
            .nodes
            .get(node.0)
            .ok_or(BuildError::UnknownNode(node))?;
        for trigger in &triggers {
            let names = match trigger {
                Trigger::Received(v) | Trigger::Updated(v) => v,
            };
            for attr in names {
                if !node_ref.attr_lookup.contains_key(attr) {
                    return Err(BuildError::UnknownAttribute {
                        node: node_ref.name.clone(),
                        attr: attr.clone(),
                    });
                }
            }
        }
        let n = &mut self.nodes[node.0];
        let index = n.tasks.len();
        n.tasks.push(NodeTask {
            name: name.to_string(),
            callback: Some(callback),
            triggers,
            compute_time,
            busy_policy,
        });
        Ok(TaskId { node, index })
    }

    /// Connects one source attribute to one or more destination attributes.
    pub fn connect(
        &mut self,
        source: (NodeId, &str),
        dests: &[(NodeId, &str)],
        delay: f64,
        send_on: SendOn,
        send_wait: Option<f64>,
        start: Option<f64>,
    ) -> Result<EdgeId, BuildError> {
        if !delay.is_finite() || delay < 0.0 {
            return Err(BuildError::BadTime);
        }
        if dests.is_empty() {
            return Err(BuildError::BadEdgeSpec("no destinations".into()));
        }
        if send_wait.is_some() && send_on != SendOn::Sent {
            return Err(BuildError::BadEdgeSpec(
                "send_wait requires send_on = Sent".into(),
            ));
        }
        if start.is_some() && send_on != SendOn::Sent {
            return Err(BuildError::BadEdgeSpec(
                "start requires send_on = Sent".into(),
            ));
        }
        if let Some(w) = send_wait {
            if !w.is_finite() || w <= 0.0 {
                return Err(BuildError::BadTime);
            }
        }
        let src = self.resolve_attr(source.0, source.1)?;
        let mut resolved = Vec::with_capacity(dests.len());
        for &(n, a) in dests {
            resolved.push((n, self.resolve_attr(n, a)?.1));
        }
        let resolved: Vec<(NodeId, usize)> = resolved
            .into_iter()
            .map(|(n, a)| (n, a))
            .collect();
        let id = EdgeId(self.edges.len());
        let start_time = start.unwrap_or(0.0);
        if !start_time.is_finite() || start_time < 0.0 {
            return Err(BuildError::BadTime);
        }
        let name = format!("e{}:{}.{}", id.0, self.nodes[source.0 .0].name, source.1);
        self.edges.push(CommEdge {
            name,
            source: (source.0, src.1),
            dests: resolved,
            delay,
            send_on,
            send_wait,
            start: start_time,
            state: EdgeState::Idle,
            in_flight: 0,
        });
        match send_on {
            SendOn::Updated => {
                self.updated_edges
                    .entry((source.0 .0, src.1))
                    .or_default()
                    .push(id.0);
            }
            SendOn::Sent => {
                // periodic edges schedule themselves
                self.push_signal(start_time, SignalKind::Communicate, Target::Edge(id), None, None);
            }
        }
        Ok(id)
    }

    fn resolve_attr(&self, node: NodeId, attr: &str) -> Result<(NodeId, usize), BuildError> {
        let n = self
            .nodes
            .get(node.0)
            .ok_or(BuildError::UnknownNode(node))?;
        let idx = n
            .attr_lookup
            .get(attr)
            .ok_or_else(|| BuildError::UnknownAttribute {
                node: n.name.clone(),
                attr: attr.to_string(),
            })?;
        Ok((node, *idx))
    }

    /// Enqueues an execute signal for `task` at the given simulated time.
    pub fn schedule_trigger(&mut self, task: TaskId, time: f64) -> Result<(), BuildError> {
        if !time.is_finite() || time < 0.0 {
            return Err(BuildError::BadTime);
        }
        self.push_signal(time, SignalKind::ExecuteTask, Target::Task(task), None, None);
        Ok(())
    }

    /// Injects a raw signal; times earlier than the clock are clamped. Meant
    /// for robustness testing of the state managers.
    pub fn inject_signal(&mut self, time: f64, kind: SignalKind, target: Target) {
        let t = if time.is_finite() {
            time.max(self.clock)
        } else {
            self.clock
        };
        self.push_signal(t, kind, target, None, None);
    }

    pub(crate) fn push_signal(
        &mut self,
        time: f64,
        kind: SignalKind,
        target: Target,
        payload: Option<AttrValue>,
        attr: Option<usize>,
    ) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(OrdSignal(Signal {
            time,
            seq,
            kind,
            target,
            payload,
            attr,
        })));
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.nodes[node.0].name
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_name(&self, edge: EdgeId) -> &str {
        &self.edges[edge.0].name
    }

    pub fn edge_dest_count(&self, edge: EdgeId) -> usize {
        self.edges[edge.0].dests.len()
    }

    pub fn edge_delay(&self, edge: EdgeId) -> f64 {
        self.edges[edge.0].delay
    }

    pub fn attribute(&self, node: NodeId, name: &str) -> Option<&Attribute> {
        let n = self.nodes.get(node.0)?;
        n.attr_lookup.get(name).map(|&i| &n.attrs[i])
    }

    pub fn value(&self, node: NodeId, name: &str) -> Option<&AttrValue> {
        self.attribute(node, name).map(|a| &a.value)
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// (time, value) at every commit or receive of `attr` on `node`.
    pub fn state_series(&self, node: NodeId, attr: &str) -> Vec<(f64, AttrValue)> {
        let name = &self.nodes[node.0].name;
        self.attr_log
            .iter()
            .filter(|s| &s.node == name && s.attr == attr)
            .map(|s| (s.t, s.value.clone()))
            .collect()
    }
}

/// Callback context: committed attribute reads, staged writes, clocks and
/// engine control. Reads see pre-execution values; writes become visible at
/// the task's finalize time.
pub struct TaskCtx<'a> {
    pub(crate) graph: &'a ComputingGraph,
    pub(crate) node: NodeId,
    pub(crate) staged: Vec<(usize, AttrValue)>,
    pub(crate) compute_override: Option<f64>,
    pub(crate) stop: bool,
    pub(crate) error: Option<String>,
}

impl<'a> TaskCtx<'a> {
    pub fn get(&self, attr: &str) -> Option<&AttrValue> {
        self.graph.value(self.node, attr)
    }

    pub fn get_real(&self, attr: &str) -> f64 {
        self.get(attr).and_then(|v| v.as_real()).unwrap_or(0.0)
    }

    pub fn get_int(&self, attr: &str) -> i64 {
        self.get(attr).and_then(|v| v.as_int()).unwrap_or(0)
    }

    pub fn get_vector(&self, attr: &str) -> Vec<f64> {
        self.get(attr)
            .and_then(|v| v.as_vector().map(|s| s.to_vec()))
            .unwrap_or_default()
    }

    pub fn attribute(&self, attr: &str) -> Option<&Attribute> {
        self.graph.attribute(self.node, attr)
    }

    /// Stages an update; it commits when the task finalizes.
    pub fn update(&mut self, attr: &str, value: impl Into<AttrValue>) {
        let node = &self.graph.nodes[self.node.0];
        match node.attr_lookup.get(attr) {
            Some(&idx) => {
                let value = value.into();
                // later stages of the same attribute win
                if let Some(slot) = self.staged.iter_mut().find(|(i, _)| *i == idx) {
                    slot.1 = value;
                } else {
                    self.staged.push((idx, value));
                }
            }
            None => {
                self.error = Some(format!(
                    "task staged unknown attribute `{attr}` on node `{}`",
                    node.name
                ));
            }
        }
    }

    /// Current global clock.
    pub fn time(&self) -> f64 {
        self.graph.clock
    }

    /// Local clock of the executing node.
    pub fn node_clock(&self) -> f64 {
        self.graph.nodes[self.node.0].local_clock
    }

    /// Time of the earliest queued signal, if any.
    pub fn next_signal_time(&self) -> Option<f64> {
        self.graph.queue.peek().map(|Reverse(s)| s.0.time)
    }

    /// Simulated duration of this execution, for `ComputeTime::FromCallback`.
    pub fn set_compute_time(&mut self, dt: f64) {
        self.compute_override = Some(dt.max(0.0));
    }

    /// Stops the computing graph after the current signal.
    pub fn stop(&mut self) {
        self.stop = true;
    }
}
