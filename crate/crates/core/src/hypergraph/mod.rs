//! Graph containers: standard graphs, hypergraphs and directed multigraphs
//! with incidence matrices, hierarchical subgraphs and k-way partitioning.
//!
//! Graphs are append-only: node and edge ids are dense indices that stay
//! valid for the lifetime of the graph. Subgraphs are groupings of the
//! parent's nodes; edges are owned by the level they were added on.

mod partition;

pub use partition::{Partition, PartitionError};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Handle to a node. Dense index, unique within one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Handle to an edge. Dense index, unique within one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

/// Handle to a subgraph. Index 0 always refers to the root graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubgraphId(pub usize);

pub const ROOT: SubgraphId = SubgraphId(0);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("unknown subgraph {0:?}")]
    UnknownSubgraph(SubgraphId),
    #[error("degenerate edge support: need at least 2 distinct nodes, got {0}")]
    DegenerateSupport(usize),
    #[error("node {0} is already assigned to subgraph {1:?}")]
    NodeAlreadyAssigned(NodeId, SubgraphId),
    #[error("node {node} does not belong to parent subgraph {parent:?}")]
    NodeNotInParent { node: NodeId, parent: SubgraphId },
    #[error("bad part count k={k} for {nodes} nodes")]
    BadK { k: usize, nodes: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeRec {
    /// Supporting nodes; for a directed edge the first entry is the source.
    support: Vec<NodeId>,
    directed: bool,
    /// Level that owns this edge (ROOT for edges of the top graph).
    owner: SubgraphId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SubgraphRec {
    parent: Option<SubgraphId>,
    nodes: Vec<NodeId>,
    children: Vec<SubgraphId>,
}

/// A hypergraph that may also hold standard and directed edges, with
/// hierarchical subgraphs stored in an arena indexed by [`SubgraphId`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hypergraph {
    node_count: usize,
    edges: Vec<EdgeRec>,
    /// Per node, incident edge ids (each edge counted once).
    node_edges: Vec<Vec<EdgeId>>,
    subgraphs: Vec<SubgraphRec>,
    /// For nodes assigned to a child subgraph, that child; root nodes have none.
    assignment: Vec<Option<SubgraphId>>,
}

impl Default for Hypergraph {
    fn default() -> Self {
        Self::new()
    }
}

impl Hypergraph {
    pub fn new() -> Self {
        Hypergraph {
            node_count: 0,
            edges: Vec::new(),
            node_edges: Vec::new(),
            subgraphs: vec![SubgraphRec {
                parent: None,
                nodes: Vec::new(),
                children: Vec::new(),
            }],
            assignment: Vec::new(),
        }
    }

    pub fn add_node(&mut self) -> NodeId {
        let id = NodeId(self.node_count);
        self.node_count += 1;
        self.node_edges.push(Vec::new());
        self.assignment.push(None);
        self.subgraphs[ROOT.0].nodes.push(id);
        id
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count).map(NodeId)
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        n.0 < self.node_count
    }

    fn check_node(&self, n: NodeId) -> Result<(), GraphError> {
        if self.contains_node(n) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(n))
        }
    }

    fn check_subgraph(&self, s: SubgraphId) -> Result<(), GraphError> {
        if s.0 < self.subgraphs.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownSubgraph(s))
        }
    }

    /// Adds an undirected (hyper)edge over `support` to the root graph.
    pub fn add_edge(&mut self, support: &[NodeId]) -> Result<EdgeId, GraphError> {
        self.add_edge_in(ROOT, support)
    }

    /// Adds an undirected (hyper)edge owned by subgraph `owner`.
    pub fn add_edge_in(&mut self, owner: SubgraphId, support: &[NodeId]) -> Result<EdgeId, GraphError> {
        self.check_subgraph(owner)?;
        for &n in support {
            self.check_node(n)?;
        }
        let mut distinct = support.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(GraphError::DegenerateSupport(distinct.len()));
        }
        Ok(self.push_edge(EdgeRec {
            support: distinct,
            directed: false,
            owner,
        }))
    }

    /// Adds a directed edge from `src` to one or more destinations.
    pub fn add_directed_edge(&mut self, src: NodeId, dsts: &[NodeId]) -> Result<EdgeId, GraphError> {
        self.add_directed_edge_in(ROOT, src, dsts)
    }

    pub fn add_directed_edge_in(
        &mut self,
        owner: SubgraphId,
        src: NodeId,
        dsts: &[NodeId],
    ) -> Result<EdgeId, GraphError> {
        self.check_subgraph(owner)?;
        self.check_node(src)?;
        for &n in dsts {
            self.check_node(n)?;
        }
        let mut seen = dsts.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.is_empty() || seen.contains(&src) {
            return Err(GraphError::DegenerateSupport(seen.len() + 1));
        }
        let mut support = vec![src];
        support.extend(dsts.iter().copied());
        Ok(self.push_edge(EdgeRec {
            support,
            directed: true,
            owner,
        }))
    }

    fn push_edge(&mut self, rec: EdgeRec) -> EdgeId {
        let id = EdgeId(self.edges.len());
        let mut incident: Vec<NodeId> = rec.support.clone();
        incident.sort_unstable();
        incident.dedup();
        for n in incident {
            self.node_edges[n.0].push(id);
        }
        self.edges.push(rec);
        id
    }

    /// Supporting node set of an edge (source first for directed edges).
    pub fn support(&self, e: EdgeId) -> Result<&[NodeId], GraphError> {
        self.edges
            .get(e.0)
            .map(|r| r.support.as_slice())
            .ok_or(GraphError::UnknownEdge(e))
    }

    pub fn is_directed(&self, e: EdgeId) -> Result<bool, GraphError> {
        self.edges
            .get(e.0)
            .map(|r| r.directed)
            .ok_or(GraphError::UnknownEdge(e))
    }

    /// Edges incident to node `n`.
    pub fn edges_of(&self, n: NodeId) -> Result<&[EdgeId], GraphError> {
        self.check_node(n)?;
        Ok(&self.node_edges[n.0])
    }

    /// Number of edges connected to `n`, counting hyperedge membership once.
    pub fn degree(&self, n: NodeId) -> Result<usize, GraphError> {
        self.check_node(n)?;
        Ok(self.node_edges[n.0].len())
    }

    /// Adds an empty child subgraph under `parent`.
    pub fn add_subgraph(&mut self, parent: SubgraphId) -> Result<SubgraphId, GraphError> {
        self.check_subgraph(parent)?;
        let id = SubgraphId(self.subgraphs.len());
        self.subgraphs.push(SubgraphRec {
            parent: Some(parent),
            nodes: Vec::new(),
            children: Vec::new(),
        });
        self.subgraphs[parent.0].children.push(id);
        Ok(id)
    }

    /// Assigns node `n` to child subgraph `sub`. A node may belong to at most
    /// one child of any given parent.
    pub fn assign_node(&mut self, sub: SubgraphId, n: NodeId) -> Result<(), GraphError> {
        self.check_subgraph(sub)?;
        self.check_node(n)?;
        let parent = self.subgraphs[sub.0]
            .parent
            .ok_or(GraphError::UnknownSubgraph(sub))?;
        if parent != ROOT && !self.subgraphs[parent.0].nodes.contains(&n) {
            return Err(GraphError::NodeNotInParent { node: n, parent });
        }
        // Sibling exclusivity: the node may not already live in another child
        // of the same parent.
        for &sibling in &self.subgraphs[parent.0].children {
            if self.subgraphs[sibling.0].nodes.contains(&n) {
                return Err(GraphError::NodeAlreadyAssigned(n, sibling));
            }
        }
        self.subgraphs[sub.0].nodes.push(n);
        if parent == ROOT {
            self.assignment[n.0] = Some(sub);
        }
        Ok(())
    }

    pub fn subgraph_ids(&self) -> impl Iterator<Item = SubgraphId> {
        (0..self.subgraphs.len()).map(SubgraphId)
    }

    pub fn children(&self, s: SubgraphId) -> Result<&[SubgraphId], GraphError> {
        self.check_subgraph(s)?;
        Ok(&self.subgraphs[s.0].children)
    }

    pub fn parent(&self, s: SubgraphId) -> Result<Option<SubgraphId>, GraphError> {
        self.check_subgraph(s)?;
        Ok(self.subgraphs[s.0].parent)
    }

    /// Nodes of a subgraph. For the root this is every node in the graph.
    pub fn subgraph_nodes(&self, s: SubgraphId) -> Result<&[NodeId], GraphError> {
        self.check_subgraph(s)?;
        Ok(&self.subgraphs[s.0].nodes)
    }

    /// Edges owned by subgraph `s` itself (children's edges excluded).
    pub fn own_edges(&self, s: SubgraphId) -> Result<Vec<EdgeId>, GraphError> {
        self.check_subgraph(s)?;
        Ok(self
            .edges
            .iter()
            .enumerate()
            .filter(|(_, r)| r.owner == s)
            .map(|(i, _)| EdgeId(i))
            .collect())
    }

    pub fn edge_owner(&self, e: EdgeId) -> Result<SubgraphId, GraphError> {
        self.edges
            .get(e.0)
            .map(|r| r.owner)
            .ok_or(GraphError::UnknownEdge(e))
    }

    /// Incidence matrix over all nodes and edges of the graph.
    pub fn incidence_matrix(&self) -> IncidenceMatrix {
        let mut entries = Vec::new();
        for (ei, rec) in self.edges.iter().enumerate() {
            if rec.directed {
                let src = rec.support[0];
                entries.push((src.0, ei, -1.0));
                for &dst in &rec.support[1..] {
                    entries.push((dst.0, ei, 1.0));
                }
            } else {
                for &n in &rec.support {
                    entries.push((n.0, ei, 1.0));
                }
            }
        }
        IncidenceMatrix {
            rows: self.node_count,
            cols: self.edges.len(),
            entries,
        }
    }

    /// k-way partition of the root node set, minimizing cut hyperedges.
    pub fn partition(&self, k: usize) -> Result<Partition, GraphError> {
        partition::partition(self, k)
    }
}

/// Node-by-edge incidence matrix in coordinate-list form.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    pub rows: usize,
    pub cols: usize,
    /// (node index, edge index, value) with value in {-1, +1}.
    pub entries: Vec<(usize, usize, f64)>,
}

impl IncidenceMatrix {
    /// Dense row-major conversion.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.cols]; self.rows];
        for &(r, c, v) in &self.entries {
            dense[r][c] += v;
        }
        dense
    }

    pub fn column_sum(&self, col: usize) -> f64 {
        self.entries
            .iter()
            .filter(|&&(_, c, _)| c == col)
            .map(|&(_, _, v)| v)
            .sum()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries
            .iter()
            .filter(|&&(r, c, _)| r == row && c == col)
            .map(|&(_, _, v)| v)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_node_ids() {
        let mut g = Hypergraph::new();
        assert_eq!(g.add_node(), NodeId(0));
        g.add_node();
        assert_eq!(g.add_node(), NodeId(2));
        let mut g2 = Hypergraph::new();
        for _ in 0..27 {
            g2.add_node();
        }
        assert_eq!(g2.node_count(), 27);
    }

    #[test]
    fn hyperedge_support() {
        let mut g = Hypergraph::new();
        let n1 = g.add_node();
        let n2 = g.add_node();
        let n3 = g.add_node();
        let e = g.add_edge(&[n1, n2, n3]).unwrap();
        assert_eq!(g.support(e).unwrap().len(), 3);
    }

    #[test]
    fn multigraph_allows_parallel_edges() {
        let mut g = Hypergraph::new();
        let n1 = g.add_node();
        let n2 = g.add_node();
        let e1 = g.add_edge(&[n1, n2]).unwrap();
        let e2 = g.add_edge(&[n1, n2]).unwrap();
        assert_ne!(e1, e2);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn self_loop_rejected() {
        let mut g = Hypergraph::new();
        let n1 = g.add_node();
        assert_eq!(
            g.add_edge(&[n1, n1]),
            Err(GraphError::DegenerateSupport(1))
        );
    }

    #[test]
    fn unknown_node_rejected() {
        let mut g = Hypergraph::new();
        let n1 = g.add_node();
        assert_eq!(
            g.add_edge(&[n1, NodeId(7)]),
            Err(GraphError::UnknownNode(NodeId(7)))
        );
    }

    #[test]
    fn path_incidence() {
        let mut g = Hypergraph::new();
        let n1 = g.add_node();
        let n2 = g.add_node();
        let n3 = g.add_node();
        g.add_edge(&[n1, n2]).unwrap();
        g.add_edge(&[n2, n3]).unwrap();
        let a = g.incidence_matrix();
        assert_eq!(
            a.to_dense(),
            vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]
        );
    }

    #[test]
    fn directed_column_sums_to_zero() {
        let mut g = Hypergraph::new();
        let n1 = g.add_node();
        let n2 = g.add_node();
        let e = g.add_directed_edge(n1, &[n2]).unwrap();
        let a = g.incidence_matrix();
        assert_eq!(a.get(n1.0, e.0), -1.0);
        assert_eq!(a.get(n2.0, e.0), 1.0);
        assert_eq!(a.column_sum(e.0), 0.0);
    }

    #[test]
    fn degree_counts_incidences() {
        let mut g = Hypergraph::new();
        let c = g.add_node();
        let tips: Vec<NodeId> = (0..3).map(|_| g.add_node()).collect();
        for &t in &tips {
            g.add_edge(&[c, t]).unwrap();
        }
        let iso = g.add_node();
        assert_eq!(g.degree(c).unwrap(), 3);
        assert_eq!(g.degree(iso).unwrap(), 0);
    }

    // Hypergraph of the three-node example: three standard edges plus one
    // hyperedge over all three nodes; checking a node incident to three of
    // the four edges.
    #[test]
    fn degree_with_hyperedge() {
        let mut g = Hypergraph::new();
        let n1 = g.add_node();
        let n2 = g.add_node();
        let n3 = g.add_node();
        g.add_edge(&[n1, n2]).unwrap(); // e1
        g.add_edge(&[n2, n3]).unwrap(); // e2
        g.add_edge(&[n1, n3]).unwrap(); // e3
        g.add_edge(&[n1, n2, n3]).unwrap(); // e4
        // n1 supports e1, e3, e4.
        assert_eq!(g.degree(n1).unwrap(), 3);
    }

    #[test]
    fn subgraph_hierarchy() {
        let mut g = Hypergraph::new();
        let nodes: Vec<NodeId> = (0..6).map(|_| g.add_node()).collect();
        let s1 = g.add_subgraph(ROOT).unwrap();
        let s2 = g.add_subgraph(ROOT).unwrap();
        for &n in &nodes[..3] {
            g.assign_node(s1, n).unwrap();
        }
        for &n in &nodes[3..] {
            g.assign_node(s2, n).unwrap();
        }
        g.add_edge_in(s1, &[nodes[0], nodes[1], nodes[2]]).unwrap(); // e1
        g.add_edge_in(s2, &[nodes[3], nodes[4]]).unwrap(); // e2
        g.add_edge_in(s2, &[nodes[4], nodes[5]]).unwrap(); // e3
        let e4 = g.add_edge(&[nodes[2], nodes[3]]).unwrap(); // parent-level
        assert_eq!(g.own_edges(ROOT).unwrap(), vec![e4]);
        assert_eq!(g.own_edges(s1).unwrap().len(), 1);
        assert_eq!(g.own_edges(s2).unwrap().len(), 2);
        // child edges are absent from the parent's own edge set
        assert!(!g.own_edges(ROOT).unwrap().contains(&EdgeId(0)));
    }

    #[test]
    fn double_assignment_rejected() {
        let mut g = Hypergraph::new();
        let n = g.add_node();
        let s1 = g.add_subgraph(ROOT).unwrap();
        let s2 = g.add_subgraph(ROOT).unwrap();
        g.assign_node(s1, n).unwrap();
        assert_eq!(
            g.assign_node(s2, n),
            Err(GraphError::NodeAlreadyAssigned(n, s1))
        );
    }
}
