//! The event loop: pops the earliest (time, seq) signal, advances the global
//! clock, and dispatches through the node and edge state managers. Strictly
//! sequential, which is the determinism contract.

use crate::graph::{
    ComputingGraph, EdgeId, NodeId, Signal, Status, Target, TaskCtx, TaskId, ComputeTime,
    BusyPolicy,
};
use crate::machine::{edge_transition, EdgeState, NodeState, SignalKind};
use crate::trace::{AttrSample, Entity, EntityKind, TraceDocument, TraceEvent, TraceMeta};
use std::cmp::Reverse;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("task `{task}` on node `{node}` failed: {message}")]
    Callback {
        node: String,
        task: String,
        message: String,
    },
}

impl ComputingGraph {
    /// Runs the signal queue to completion, to `horizon`, or until stopped.
    pub fn execute(&mut self, horizon: Option<f64>) -> Result<Status, EngineError> {
        self.execute_bounded(horizon, None)
    }

    /// Like [`ComputingGraph::execute`] with a hard cap on dispatched
    /// signals, a guard against graphs that livelock at constant time.
    pub fn execute_bounded(
        &mut self,
        horizon: Option<f64>,
        max_events: Option<u64>,
    ) -> Result<Status, EngineError> {
        let mut dispatched: u64 = 0;
        loop {
            if let Some(cap) = max_events {
                if dispatched >= cap {
                    self.status = Status::EventLimit;
                    break;
                }
            }
            if self.stop_requested {
                self.status = Status::Stopped;
                break;
            }
            let Some(Reverse(peeked)) = self.queue.peek() else {
                self.status = Status::Quiescent;
                break;
            };
            if let Some(h) = horizon {
                if peeked.0.time > h {
                    self.clock = h;
                    self.status = Status::HorizonReached;
                    break;
                }
            }
            let Reverse(ord) = self.queue.pop().expect("peeked");
            let signal = ord.0;
            debug_assert!(signal.time >= self.clock);
            self.clock = signal.time;
            dispatched += 1;
            if let Err(e) = self.dispatch(signal) {
                self.status = Status::Failed;
                return Err(e);
            }
        }
        Ok(self.status)
    }

    fn dispatch(&mut self, signal: Signal) -> Result<(), EngineError> {
        match (signal.kind, signal.target) {
            (SignalKind::ExecuteTask, Target::Task(task)) => self.on_execute(&signal, task),
            (SignalKind::FinalizeTask, Target::Task(task)) => {
                self.on_finalize(&signal, task);
                Ok(())
            }
            (SignalKind::BackToIdle, Target::Node(node)) => {
                self.on_node_idle(&signal, node);
                Ok(())
            }
            (SignalKind::BackToIdle, Target::Edge(edge)) => {
                self.on_edge_idle(&signal, edge);
                Ok(())
            }
            (SignalKind::AttributeUpdated, Target::Node(node)) => {
                self.on_updated(&signal, node);
                Ok(())
            }
            (SignalKind::Communicate, Target::Edge(edge)) => {
                self.on_communicate(&signal, edge);
                Ok(())
            }
            (SignalKind::AttributeSent, Target::Edge(edge)) => {
                self.on_sent(&signal, edge);
                Ok(())
            }
            (SignalKind::AttributeReceived, Target::Delivery { edge, dest }) => {
                self.on_received(signal, edge, dest);
                Ok(())
            }
            (SignalKind::AllReceived, Target::Edge(edge)) => {
                self.on_all_received(&signal, edge);
                Ok(())
            }
            (SignalKind::Stop, Target::Graph) => {
                self.stop_requested = true;
                let seq = self.next_trace_seq();
                self.trace.push(TraceEvent {
                    t: signal.time,
                    seq,
                    entity: Entity {
                        kind: EntityKind::Graph,
                        name: "graph".into(),
                    },
                    signal: SignalKind::Stop,
                    before: None,
                    after: None,
                    attr: None,
                    note: None,
                });
                Ok(())
            }
            // anything else has no defined transition: log and move on
            (kind, target) => {
                self.log_ignored(&signal, kind, target);
                Ok(())
            }
        }
    }

    fn on_execute(&mut self, signal: &Signal, task: TaskId) -> Result<(), EngineError> {
        let Some(node) = self.nodes.get(task.node.0) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return Ok(());
        };
        if task.index >= node.tasks.len() {
            self.log_ignored(signal, signal.kind, signal.target);
            return Ok(());
        }
        let state = node.state;
        self.nodes[task.node.0].local_clock = signal.time;

        if state != NodeState::Idle {
            // busy: queue or drop per the task's policy
            let policy = self.nodes[task.node.0].tasks[task.index].busy_policy;
            let task_name = self.nodes[task.node.0].tasks[task.index].name.clone();
            let note = match policy {
                BusyPolicy::Queue { capacity } => {
                    let waiting = self.nodes[task.node.0]
                        .pending
                        .iter()
                        .filter(|&&t| t == task.index)
                        .count();
                    if waiting < capacity {
                        self.nodes[task.node.0].pending.push_back(task.index);
                        format!("queued {task_name}")
                    } else {
                        format!("coalesced {task_name}")
                    }
                }
                BusyPolicy::Drop => format!("dropped {task_name}"),
            };
            self.trace_node(signal, task.node, SignalKind::ExecuteTask, state, state, None, Some(note));
            return Ok(());
        }

        self.trace_node(
            signal,
            task.node,
            SignalKind::ExecuteTask,
            NodeState::Idle,
            NodeState::ExecutingTask,
            None,
            Some(self.nodes[task.node.0].tasks[task.index].name.clone()),
        );
        self.nodes[task.node.0].state = NodeState::ExecutingTask;

        // run the callback against a read-only snapshot, staging its writes
        let mut callback = self.nodes[task.node.0].tasks[task.index]
            .callback
            .take()
            .expect("callback present outside execution");
        let mut ctx = TaskCtx {
            graph: self,
            node: task.node,
            staged: Vec::new(),
            compute_override: None,
            stop: false,
            error: None,
        };
        let started = Instant::now();
        let result = callback(&mut ctx);
        let elapsed = started.elapsed().as_secs_f64();
        let TaskCtx {
            staged,
            compute_override,
            stop,
            error,
            ..
        } = ctx;
        self.nodes[task.node.0].tasks[task.index].callback = Some(callback);

        let failure = match result {
            Err(message) => Some(message),
            Ok(()) => error,
        };
        if let Some(message) = failure {
            let node_name = self.nodes[task.node.0].name.clone();
            let task_name = self.nodes[task.node.0].tasks[task.index].name.clone();
            self.trace_node(
                signal,
                task.node,
                SignalKind::ExecuteTask,
                NodeState::ExecutingTask,
                NodeState::ExecutingTask,
                None,
                Some(format!("callback failure: {message}")),
            );
            return Err(EngineError::Callback {
                node: node_name,
                task: task_name,
                message,
            });
        }

        if stop {
            self.stop_requested = true;
        }
        let dt = match self.nodes[task.node.0].tasks[task.index].compute_time {
            ComputeTime::Fixed(d) => d,
            ComputeTime::Walltime => elapsed,
            ComputeTime::FromCallback => compute_override.unwrap_or(0.0),
        };
        self.nodes[task.node.0].running = Some(crate::graph::RunningTask {
            task: task.index,
            staged,
        });
        self.push_signal(
            signal.time + dt,
            SignalKind::FinalizeTask,
            Target::Task(task),
            None,
            None,
        );
        Ok(())
    }

    fn on_finalize(&mut self, signal: &Signal, task: TaskId) {
        let Some(node) = self.nodes.get(task.node.0) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        let matches_running = node
            .running
            .as_ref()
            .map(|r| r.task == task.index)
            .unwrap_or(false);
        if node.state != NodeState::ExecutingTask || !matches_running {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        }
        self.nodes[task.node.0].local_clock = signal.time;
        self.trace_node(
            signal,
            task.node,
            SignalKind::FinalizeTask,
            NodeState::ExecutingTask,
            NodeState::FinalizedTask,
            None,
            Some(self.nodes[task.node.0].tasks[task.index].name.clone()),
        );
        self.nodes[task.node.0].state = NodeState::FinalizedTask;

        // commit staged updates; each committed attribute raises
        // attribute_updated for trigger evaluation and Updated-edges
        let running = self.nodes[task.node.0].running.take().expect("running task");
        for (attr_idx, value) in running.staged {
            let node_ref = &mut self.nodes[task.node.0];
            node_ref.attrs[attr_idx].value = value.clone();
            node_ref.attrs[attr_idx].last_updated = signal.time;
            self.attr_log.push(AttrSample {
                t: signal.time,
                node: self.nodes[task.node.0].name.clone(),
                attr: self.nodes[task.node.0].attrs[attr_idx].name.clone(),
                value,
                received: false,
            });
            self.push_signal(
                signal.time,
                SignalKind::AttributeUpdated,
                Target::Node(task.node),
                None,
                Some(attr_idx),
            );
        }
        self.push_signal(
            signal.time,
            SignalKind::BackToIdle,
            Target::Node(task.node),
            None,
            None,
        );
    }

    fn on_node_idle(&mut self, signal: &Signal, node: NodeId) {
        let Some(n) = self.nodes.get(node.0) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        if n.state != NodeState::FinalizedTask {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        }
        self.nodes[node.0].local_clock = signal.time;
        self.trace_node(
            signal,
            node,
            SignalKind::BackToIdle,
            NodeState::FinalizedTask,
            NodeState::Idle,
            None,
            None,
        );
        self.nodes[node.0].state = NodeState::Idle;
        if let Some(next) = self.nodes[node.0].pending.pop_front() {
            self.push_signal(
                signal.time,
                SignalKind::ExecuteTask,
                Target::Task(TaskId { node, index: next }),
                None,
                None,
            );
        }
    }

    fn on_updated(&mut self, signal: &Signal, node: NodeId) {
        let (Some(n), Some(attr_idx)) = (self.nodes.get(node.0), signal.attr) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        if attr_idx >= n.attrs.len() {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        }
        let state = n.state;
        let attr_name = n.attrs[attr_idx].name.clone();
        self.nodes[node.0].local_clock = signal.time;
        self.trace_node(
            signal,
            node,
            SignalKind::AttributeUpdated,
            state,
            state,
            Some(attr_name.clone()),
            None,
        );
        // tasks triggered by Updated(attr), in registration order
        let mut to_run = Vec::new();
        for (ti, task) in self.nodes[node.0].tasks.iter().enumerate() {
            let hit = task.triggers.iter().any(|t| match t {
                crate::graph::Trigger::Updated(names) => names.iter().any(|a| a == &attr_name),
                crate::graph::Trigger::Received(_) => false,
            });
            if hit {
                to_run.push(ti);
            }
        }
        for ti in to_run {
            self.push_signal(
                signal.time,
                SignalKind::ExecuteTask,
                Target::Task(TaskId { node, index: ti }),
                None,
                None,
            );
        }
        // Updated-edges fan out from this attribute
        if let Some(edges) = self.updated_edges.get(&(node.0, attr_idx)) {
            for &e in &edges.clone() {
                self.push_signal(
                    signal.time,
                    SignalKind::Communicate,
                    Target::Edge(EdgeId(e)),
                    None,
                    None,
                );
            }
        }
    }

    fn on_communicate(&mut self, signal: &Signal, edge: EdgeId) {
        let Some(e) = self.edges.get(edge.0) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        let Some(next_state) = edge_transition(e.state, SignalKind::Communicate) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        let before = e.state;
        let (src_node, src_attr) = e.source;
        let snapshot = self.nodes[src_node.0].attrs[src_attr].value.clone();
        let src_attr_name = self.nodes[src_node.0].attrs[src_attr].name.clone();
        let delay = e.delay;
        let n_dests = e.dests.len();
        let wait = e.send_wait;

        self.trace_edge(
            signal,
            edge,
            SignalKind::Communicate,
            before,
            next_state,
            Some(src_attr_name),
            None,
        );
        self.edges[edge.0].state = next_state;
        self.edges[edge.0].in_flight += n_dests;

        self.push_signal(
            signal.time,
            SignalKind::AttributeSent,
            Target::Edge(edge),
            None,
            Some(src_attr),
        );
        for dest in 0..n_dests {
            self.push_signal(
                signal.time + delay,
                SignalKind::AttributeReceived,
                Target::Delivery { edge, dest },
                Some(snapshot.clone()),
                None,
            );
        }
        if let Some(w) = wait {
            self.push_signal(
                signal.time + w,
                SignalKind::Communicate,
                Target::Edge(edge),
                None,
                None,
            );
        }
    }

    fn on_sent(&mut self, signal: &Signal, edge: EdgeId) {
        let Some(e) = self.edges.get(edge.0) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        let Some(next) = edge_transition(e.state, SignalKind::AttributeSent) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        let before = e.state;
        let attr = self.nodes[e.source.0 .0].attrs[e.source.1].name.clone();
        self.trace_edge(signal, edge, SignalKind::AttributeSent, before, next, Some(attr), None);
        self.edges[edge.0].state = next;
    }

    fn on_received(&mut self, signal: Signal, edge: EdgeId, dest: usize) {
        let Some(e) = self.edges.get(edge.0) else {
            self.log_ignored(&signal, signal.kind, signal.target);
            return;
        };
        if dest >= e.dests.len() {
            self.log_ignored(&signal, signal.kind, signal.target);
            return;
        }
        let Some(next) = edge_transition(e.state, SignalKind::AttributeReceived) else {
            self.log_ignored(&signal, signal.kind, signal.target);
            return;
        };
        let before = e.state;
        let (dnode, dattr) = e.dests[dest];
        // injected signals carry no payload: snapshot the source now
        let value = signal.payload.clone().unwrap_or_else(|| {
            let (sn, sa) = self.edges[edge.0].source;
            self.nodes[sn.0].attrs[sa].value.clone()
        });

        let dest_attr_name = self.nodes[dnode.0].attrs[dattr].name.clone();
        let dest_node_name = self.nodes[dnode.0].name.clone();
        self.trace_edge(
            &signal,
            edge,
            SignalKind::AttributeReceived,
            before,
            next,
            Some(dest_attr_name.clone()),
            Some(format!("to {dest_node_name}.{dest_attr_name}")),
        );

        // write through to the destination attribute
        let node_ref = &mut self.nodes[dnode.0];
        node_ref.attrs[dattr].value = value.clone();
        node_ref.attrs[dattr].last_received = signal.time;
        node_ref.local_clock = signal.time;
        self.attr_log.push(AttrSample {
            t: signal.time,
            node: dest_node_name,
            attr: dest_attr_name.clone(),
            value,
            received: true,
        });

        // Received-triggered tasks on the destination node
        let mut to_run = Vec::new();
        for (ti, task) in self.nodes[dnode.0].tasks.iter().enumerate() {
            let hit = task.triggers.iter().any(|t| match t {
                crate::graph::Trigger::Received(names) => {
                    names.iter().any(|a| a == &dest_attr_name)
                }
                crate::graph::Trigger::Updated(_) => false,
            });
            if hit {
                to_run.push(ti);
            }
        }
        for ti in to_run {
            self.push_signal(
                signal.time,
                SignalKind::ExecuteTask,
                Target::Task(TaskId {
                    node: dnode,
                    index: ti,
                }),
                None,
                None,
            );
        }

        // edge bookkeeping: all deliveries in -> all_received
        let e = &mut self.edges[edge.0];
        if e.in_flight > 0 {
            e.in_flight -= 1;
            if e.in_flight == 0 {
                self.push_signal(
                    signal.time,
                    SignalKind::AllReceived,
                    Target::Edge(edge),
                    None,
                    None,
                );
            }
        }
    }

    fn on_all_received(&mut self, signal: &Signal, edge: EdgeId) {
        let Some(e) = self.edges.get(edge.0) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        // a new communicate may have raised in_flight again: stale signal
        if e.in_flight != 0 {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        }
        let Some(next) = edge_transition(e.state, SignalKind::AllReceived) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        let before = e.state;
        self.trace_edge(signal, edge, SignalKind::AllReceived, before, next, None, None);
        self.edges[edge.0].state = next;
        self.push_signal(
            signal.time,
            SignalKind::BackToIdle,
            Target::Edge(edge),
            None,
            None,
        );
    }

    fn on_edge_idle(&mut self, signal: &Signal, edge: EdgeId) {
        let Some(e) = self.edges.get(edge.0) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        let Some(next) = edge_transition(e.state, SignalKind::BackToIdle) else {
            self.log_ignored(signal, signal.kind, signal.target);
            return;
        };
        let before = e.state;
        self.trace_edge(signal, edge, SignalKind::BackToIdle, before, next, None, None);
        self.edges[edge.0].state = next;
    }

    fn next_trace_seq(&mut self) -> u64 {
        let s = self.trace_seq;
        self.trace_seq += 1;
        s
    }

    fn trace_node(
        &mut self,
        signal: &Signal,
        node: NodeId,
        kind: SignalKind,
        before: NodeState,
        after: NodeState,
        attr: Option<String>,
        note: Option<String>,
    ) {
        let seq = self.next_trace_seq();
        self.trace.push(TraceEvent {
            t: signal.time,
            seq,
            entity: Entity {
                kind: EntityKind::Node,
                name: self.nodes[node.0].name.clone(),
            },
            signal: kind,
            before: Some(before.name().to_string()),
            after: Some(after.name().to_string()),
            attr,
            note,
        });
    }

    fn trace_edge(
        &mut self,
        signal: &Signal,
        edge: EdgeId,
        kind: SignalKind,
        before: EdgeState,
        after: EdgeState,
        attr: Option<String>,
        note: Option<String>,
    ) {
        let seq = self.next_trace_seq();
        self.trace.push(TraceEvent {
            t: signal.time,
            seq,
            entity: Entity {
                kind: EntityKind::Edge,
                name: self.edges[edge.0].name.clone(),
            },
            signal: kind,
            before: Some(before.name().to_string()),
            after: Some(after.name().to_string()),
            attr,
            note,
        });
    }

    fn log_ignored(&mut self, signal: &Signal, kind: SignalKind, target: Target) {
        let (entity_kind, name, state) = match target {
            Target::Task(t) => match self.nodes.get(t.node.0) {
                Some(n) => (EntityKind::Node, n.name.clone(), Some(n.state.name())),
                None => (EntityKind::Graph, "graph".to_string(), None),
            },
            Target::Node(n) => match self.nodes.get(n.0) {
                Some(n) => (EntityKind::Node, n.name.clone(), Some(n.state.name())),
                None => (EntityKind::Graph, "graph".to_string(), None),
            },
            Target::Edge(e) | Target::Delivery { edge: e, .. } => match self.edges.get(e.0) {
                Some(e) => (EntityKind::Edge, e.name.clone(), Some(e.state.name())),
                None => (EntityKind::Graph, "graph".to_string(), None),
            },
            Target::Graph => (EntityKind::Graph, "graph".to_string(), None),
        };
        let seq = self.next_trace_seq();
        self.trace.push(TraceEvent {
            t: signal.time,
            seq,
            entity: Entity {
                kind: entity_kind,
                name,
            },
            signal: kind,
            before: state.map(str::to_string),
            after: state.map(str::to_string),
            attr: None,
            note: Some("ignored".to_string()),
        });
    }

    /// Full trace document for export.
    pub fn export_trace(&self, horizon: Option<f64>) -> TraceDocument {
        TraceDocument {
            meta: TraceMeta {
                horizon,
                status: self.status.name().to_string(),
            },
            events: self.trace.clone(),
        }
    }
}
