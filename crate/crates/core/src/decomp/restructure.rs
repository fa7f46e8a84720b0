//! Turns a k-way partition into a two-level hierarchical model graph: one
//! child subgraph per part, part-internal links owned by the children,
//! part-spanning links kept at the parent.

use crate::hypergraph::{EdgeId, Partition, ROOT};
use crate::modelgraph::{ModelGraph, ModelGraphError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RestructureError {
    #[error("partition covers {covered} nodes, graph has {nodes}")]
    WrongNodeCount { covered: usize, nodes: usize },
    #[error("partition references part {part}, k is {k}")]
    PartOutOfRange { part: usize, k: usize },
    #[error("part {0} is empty")]
    EmptyPart(usize),
    #[error(transparent)]
    Graph(#[from] ModelGraphError),
}

/// Rebuilds `graph` as a hierarchical model graph following `partition`.
/// The flattened problem of the result has the same rows and variables as
/// the original (up to row order), so its solution set is unchanged.
pub fn apply_partition(
    graph: &ModelGraph,
    partition: &Partition,
) -> Result<ModelGraph, RestructureError> {
    let n = graph.node_count();
    if partition.assignment.len() != n {
        return Err(RestructureError::WrongNodeCount {
            covered: partition.assignment.len(),
            nodes: n,
        });
    }
    let k = partition.k;
    let mut seen = vec![false; k];
    for &p in &partition.assignment {
        if p >= k {
            return Err(RestructureError::PartOutOfRange { part: p, k });
        }
        seen[p] = true;
    }
    if let Some(empty) = seen.iter().position(|s| !s) {
        return Err(RestructureError::EmptyPart(empty));
    }

    let mut out = ModelGraph::new();
    for node in graph.nodes() {
        let id = out.add_node();
        if let Some(model) = graph.model(node) {
            out.set_model(id, model.clone())?;
        }
    }
    let mut children = Vec::with_capacity(k);
    for _ in 0..k {
        children.push(out.add_subgraph(ROOT)?);
    }
    for node in graph.nodes() {
        out.assign_node(children[partition.assignment[node.0]], node)?;
    }

    for e in 0..graph.link_count() {
        let link = graph.link(EdgeId(e)).expect("link ids are dense");
        let terms: Vec<(_, &str, f64)> = link
            .terms
            .iter()
            .map(|(n, s, c)| (*n, s.as_str(), *c))
            .collect();
        let parts: Vec<usize> = {
            let mut p: Vec<usize> = terms
                .iter()
                .map(|(n, _, _)| partition.assignment[n.0])
                .collect();
            p.sort_unstable();
            p.dedup();
            p
        };
        if parts.len() == 1 {
            out.add_link_constraint_in(children[parts[0]], &terms, link.rhs)?;
        } else {
            out.add_link_constraint(&terms, link.rhs)?;
        }
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::NodeId;
    use crate::model::ComponentModel;
    use crate::solvers::kkt::{newton_kkt, KktOptions};

    fn tracking(target: f64) -> ComponentModel {
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", 0.0).unwrap();
        m.set_objective((x - target).square()).unwrap();
        m
    }

    fn six_node_chain() -> ModelGraph {
        let mut mg = ModelGraph::new();
        let nodes: Vec<NodeId> = (0..6).map(|_| mg.add_node()).collect();
        for (i, &n) in nodes.iter().enumerate() {
            mg.set_model(n, tracking(i as f64)).unwrap();
        }
        // e1 inside part 0, e2 and e3 inside part 1, e4 spanning
        mg.add_link_constraint(&[(nodes[0], "x", 1.0), (nodes[1], "x", 1.0), (nodes[2], "x", 1.0)], 0.0)
            .unwrap();
        mg.add_link_constraint(&[(nodes[3], "x", 1.0), (nodes[4], "x", -1.0)], 0.0)
            .unwrap();
        mg.add_link_constraint(&[(nodes[4], "x", 1.0), (nodes[5], "x", -1.0)], 0.0)
            .unwrap();
        mg.add_link_constraint(&[(nodes[2], "x", 1.0), (nodes[3], "x", -1.0)], 0.0)
            .unwrap();
        mg
    }

    fn bipartition() -> Partition {
        Partition {
            k: 2,
            assignment: vec![0, 0, 0, 1, 1, 1],
            cut_edges: vec![EdgeId(3)],
        }
    }

    #[test]
    fn links_move_to_owning_children() {
        let mg = six_node_chain();
        let out = apply_partition(&mg, &bipartition()).unwrap();
        let g = out.hypergraph();
        let root_edges = g.own_edges(ROOT).unwrap();
        assert_eq!(root_edges.len(), 1);
        assert_eq!(
            g.support(root_edges[0]).unwrap(),
            &[NodeId(2), NodeId(3)]
        );
        let children = g.children(ROOT).unwrap().to_vec();
        assert_eq!(children.len(), 2);
        assert_eq!(g.own_edges(children[0]).unwrap().len(), 1);
        assert_eq!(g.own_edges(children[1]).unwrap().len(), 2);
    }

    #[test]
    fn k1_moves_all_links_into_single_child() {
        let mg = six_node_chain();
        let p = Partition {
            k: 1,
            assignment: vec![0; 6],
            cut_edges: vec![],
        };
        let out = apply_partition(&mg, &p).unwrap();
        let g = out.hypergraph();
        assert!(g.own_edges(ROOT).unwrap().is_empty());
        let child = g.children(ROOT).unwrap()[0];
        assert_eq!(g.own_edges(child).unwrap().len(), 4);
    }

    #[test]
    fn flattened_rows_identical_as_multisets() {
        let mg = six_node_chain();
        let before = mg.aggregate().unwrap();
        let after = apply_partition(&mg, &bipartition())
            .unwrap()
            .aggregate()
            .unwrap();
        assert_eq!(before.canonical_link_rows(), after.canonical_link_rows());
        assert_eq!(before.num_vars(), after.num_vars());
    }

    #[test]
    fn optimal_objective_preserved() {
        let mg = six_node_chain();
        let flat = mg.aggregate().unwrap();
        let sol = newton_kkt(&flat, KktOptions::default()).unwrap();
        let restructured = apply_partition(&mg, &bipartition()).unwrap();
        let flat2 = restructured.aggregate().unwrap();
        let sol2 = newton_kkt(&flat2, KktOptions::default()).unwrap();
        let obj1 = flat.objective_value(&sol.x).unwrap();
        let obj2 = flat2.objective_value(&sol2.x).unwrap();
        assert!((obj1 - obj2).abs() <= 1e-8);
    }

    #[test]
    fn invalid_partitions_rejected() {
        let mg = six_node_chain();
        let short = Partition {
            k: 2,
            assignment: vec![0, 1],
            cut_edges: vec![],
        };
        assert!(matches!(
            apply_partition(&mg, &short),
            Err(RestructureError::WrongNodeCount { .. })
        ));
        let empty = Partition {
            k: 3,
            assignment: vec![0, 0, 0, 1, 1, 1],
            cut_edges: vec![],
        };
        assert!(matches!(
            apply_partition(&mg, &empty),
            Err(RestructureError::EmptyPart(2))
        ));
    }
}
