//! Model graphs: a hypergraph whose nodes carry component models and whose
//! hyperedges carry linear link constraints, with hierarchical subgraphs and
//! aggregation into a single flattened problem.

use crate::expr::{EvalError, Expr};
use crate::hypergraph::{EdgeId, GraphError, Hypergraph, NodeId, SubgraphId, ROOT};
use crate::model::{ComponentModel, ModelError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelGraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} has no component model")]
    MissingModel(NodeId),
    #[error("node {node} has no variable `{name}`")]
    UnknownVariable { node: NodeId, name: String },
    #[error("link constraint references a single node; it belongs in the component model")]
    SingleNodeLink,
    #[error("link coefficient for {node}.{name} must be finite and nonzero")]
    BadCoefficient { node: NodeId, name: String },
    #[error("dangling link {edge}: node {node} no longer provides variable `{name}`")]
    DanglingLink {
        edge: EdgeId,
        node: NodeId,
        name: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("bad model graph json: {0}")]
    Json(String),
}

/// Linear equality over variables of two or more nodes. Realized as a
/// hyperedge whose support is exactly the set of referenced nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkConstraint {
    pub terms: Vec<(NodeId, String, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ModelGraph {
    graph: Hypergraph,
    models: Vec<Option<ComponentModel>>,
    links: Vec<LinkConstraint>,
}

impl ModelGraph {
    pub fn new() -> Self {
        ModelGraph {
            graph: Hypergraph::new(),
            models: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn add_node(&mut self) -> NodeId {
        let id = self.graph.add_node();
        self.models.push(None);
        id
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        self.graph.nodes()
    }

    pub fn hypergraph(&self) -> &Hypergraph {
        &self.graph
    }

    /// Attaches (or replaces) the component model of a node. Links that
    /// reference variables absent from the new model are reported by
    /// [`ModelGraph::validate`].
    pub fn set_model(&mut self, node: NodeId, model: ComponentModel) -> Result<(), ModelGraphError> {
        if !self.graph.contains_node(node) {
            return Err(ModelGraphError::UnknownNode(node));
        }
        self.models[node.0] = Some(model);
        Ok(())
    }

    pub fn model(&self, node: NodeId) -> Option<&ComponentModel> {
        self.models.get(node.0).and_then(|m| m.as_ref())
    }

    pub fn model_mut(&mut self, node: NodeId) -> Option<&mut ComponentModel> {
        self.models.get_mut(node.0).and_then(|m| m.as_mut())
    }

    pub fn add_subgraph(&mut self, parent: SubgraphId) -> Result<SubgraphId, ModelGraphError> {
        Ok(self.graph.add_subgraph(parent)?)
    }

    pub fn assign_node(&mut self, sub: SubgraphId, node: NodeId) -> Result<(), ModelGraphError> {
        Ok(self.graph.assign_node(sub, node)?)
    }

    /// Adds a link constraint `sum coeff * node.var == rhs` at the root level.
    pub fn add_link_constraint(
        &mut self,
        terms: &[(NodeId, &str, f64)],
        rhs: f64,
    ) -> Result<EdgeId, ModelGraphError> {
        self.add_link_constraint_in(ROOT, terms, rhs)
    }

    /// Adds a link constraint owned by subgraph `owner`.
    pub fn add_link_constraint_in(
        &mut self,
        owner: SubgraphId,
        terms: &[(NodeId, &str, f64)],
        rhs: f64,
    ) -> Result<EdgeId, ModelGraphError> {
        let mut support: Vec<NodeId> = Vec::new();
        for &(node, name, coeff) in terms {
            if !self.graph.contains_node(node) {
                return Err(ModelGraphError::UnknownNode(node));
            }
            let model = self
                .model(node)
                .ok_or(ModelGraphError::MissingModel(node))?;
            if model.var_index(name).is_err() {
                return Err(ModelGraphError::UnknownVariable {
                    node,
                    name: name.to_string(),
                });
            }
            if !coeff.is_finite() || coeff == 0.0 {
                return Err(ModelGraphError::BadCoefficient {
                    node,
                    name: name.to_string(),
                });
            }
            if !support.contains(&node) {
                support.push(node);
            }
        }
        if support.len() < 2 {
            return Err(ModelGraphError::SingleNodeLink);
        }
        let edge = self.graph.add_edge_in(owner, &support)?;
        debug_assert_eq!(edge.0, self.links.len());
        self.links.push(LinkConstraint {
            terms: terms
                .iter()
                .map(|&(n, s, c)| (n, s.to_string(), c))
                .collect(),
            rhs,
        });
        Ok(edge)
    }

    pub fn link(&self, e: EdgeId) -> Option<&LinkConstraint> {
        self.links.get(e.0)
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Checks referential integrity of every link constraint.
    pub fn validate(&self) -> Result<(), ModelGraphError> {
        for (i, link) in self.links.iter().enumerate() {
            for (node, name, _) in &link.terms {
                let ok = self
                    .model(*node)
                    .map(|m| m.var_index(name).is_ok())
                    .unwrap_or(false);
                if !ok {
                    return Err(ModelGraphError::DanglingLink {
                        edge: EdgeId(i),
                        node: *node,
                        name: name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn set_data(&mut self, node: NodeId, name: &str, value: f64) -> Result<(), ModelGraphError> {
        let model = self
            .model_mut(node)
            .ok_or(ModelGraphError::MissingModel(node))?;
        model.set_data(name, value)?;
        Ok(())
    }

    pub fn set_start(&mut self, node: NodeId, name: &str, value: f64) -> Result<(), ModelGraphError> {
        let model = self
            .model_mut(node)
            .ok_or(ModelGraphError::MissingModel(node))?;
        model.set_start(name, value)?;
        Ok(())
    }

    /// Copies a primal solution back into variable start values, matching by
    /// variable name; names no longer present are skipped.
    pub fn warm_start_from(&mut self, flat: &FlattenedProblem, x: &[f64]) {
        for (g, (node, _local)) in flat.var_node.iter().enumerate() {
            let name = flat.local_name(g).to_string();
            if let Some(model) = self.model_mut(*node) {
                let _ = model.set_start(&name, x[g]);
            }
        }
    }

    /// Levels in parent-first order: root, then subgraphs by breadth-first
    /// traversal in creation order.
    pub fn levels(&self) -> Vec<SubgraphId> {
        let mut order = vec![ROOT];
        let mut i = 0;
        while i < order.len() {
            let children = self
                .graph
                .children(order[i])
                .expect("subgraph of the same graph");
            order.extend_from_slice(children);
            i += 1;
        }
        order
    }

    /// Link edges in aggregation row order (levels parent-first, edge id
    /// order within each level).
    pub fn link_rows(&self) -> Vec<EdgeId> {
        let mut rows = Vec::new();
        for level in self.levels() {
            let mut own = self
                .graph
                .own_edges(level)
                .expect("subgraph of the same graph");
            own.sort_unstable();
            rows.extend(own);
        }
        rows
    }

    /// Assembles the sparse connectivity matrix over all levels.
    pub fn connectivity_matrix(&self) -> Result<ConnectivityMatrix, ModelGraphError> {
        self.validate()?;
        let index = VarIndex::build(self)?;
        let mut rows = Vec::new();
        for edge in self.link_rows() {
            let link = &self.links[edge.0];
            let mut terms = Vec::new();
            for (node, name, coeff) in &link.terms {
                let col = index.global(*node, name, self)?;
                terms.push((col, *coeff));
            }
            terms.sort_unstable_by_key(|&(c, _)| c);
            rows.push(LinkRow {
                edge,
                level: self.graph.edge_owner(edge)?,
                terms,
                rhs: link.rhs,
            });
        }
        Ok(ConnectivityMatrix {
            num_vars: index.total,
            rows,
            node_offsets: index.offsets,
            node_widths: index.widths,
        })
    }

    /// Flattens the graph and all descendant subgraphs into one problem.
    pub fn aggregate(&self) -> Result<FlattenedProblem, ModelGraphError> {
        self.validate()?;
        let index = VarIndex::build(self)?;
        let mut var_node = Vec::with_capacity(index.total);
        let mut names = Vec::with_capacity(index.total);
        let mut lower = Vec::with_capacity(index.total);
        let mut upper = Vec::with_capacity(index.total);
        let mut start = Vec::with_capacity(index.total);
        let mut node_blocks = Vec::new();

        for node in self.graph.nodes() {
            let Some(model) = self.model(node) else {
                continue;
            };
            for (local, v) in model.variables().iter().enumerate() {
                var_node.push((node, local));
                names.push(format!("{node}.{}", v.name));
                lower.push(v.lower);
                upper.push(v.upper);
                start.push(v.start);
            }
            node_blocks.push(NodeBlock {
                node,
                offset: index.offsets[&node],
                num_vars: model.num_vars(),
                equalities: model.equalities.clone(),
                inequalities: model.inequalities.clone(),
                objective: model.objective.clone(),
                data: model.data_values().to_vec(),
                var_names: model
                    .variables()
                    .iter()
                    .map(|v| v.name.clone())
                    .collect(),
            });
        }

        let pi = self.connectivity_matrix()?;
        Ok(FlattenedProblem {
            var_node,
            names,
            lower,
            upper,
            start,
            node_blocks,
            links: pi.rows,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelGraphError> {
        let mut mg: ModelGraph =
            serde_json::from_str(text).map_err(|e| ModelGraphError::Json(e.to_string()))?;
        for model in mg.models.iter_mut().flatten() {
            model.rebuild_lookups();
        }
        Ok(mg)
    }

    /// Rewrites every component model so `g >= 0` becomes `g - s == 0` with a
    /// fresh slack variable `s >= 0`; the result has equality constraints only.
    pub fn to_equality_form(&self) -> Result<ModelGraph, ModelGraphError> {
        let mut out = self.clone();
        for node in self.graph.nodes() {
            let Some(model) = self.model(node) else {
                continue;
            };
            if model.inequalities.is_empty() {
                continue;
            }
            let mut m = model.clone();
            let ineqs = std::mem::take(&mut m.inequalities);
            let point = m.start_point();
            for (i, g) in ineqs.into_iter().enumerate() {
                let s0 = g.evaluate(&point, m.data_values()).unwrap_or(0.0).max(0.0);
                let s = m.add_bounded_variable(&format!("_slack{i}"), 0.0, f64::INFINITY, s0)?;
                m.add_equality(g - s)?;
            }
            out.models[node.0] = Some(m);
        }
        Ok(out)
    }
}

/// Maps (node, local variable) to the global stacked index: nodes in id
/// order, then local declaration order.
struct VarIndex {
    offsets: BTreeMap<NodeId, usize>,
    widths: BTreeMap<NodeId, usize>,
    total: usize,
}

impl VarIndex {
    fn build(mg: &ModelGraph) -> Result<Self, ModelGraphError> {
        let mut offsets = BTreeMap::new();
        let mut widths = BTreeMap::new();
        let mut total = 0;
        for node in mg.graph.nodes() {
            if let Some(model) = mg.model(node) {
                offsets.insert(node, total);
                widths.insert(node, model.num_vars());
                total += model.num_vars();
            }
        }
        Ok(VarIndex {
            offsets,
            widths,
            total,
        })
    }

    fn global(&self, node: NodeId, name: &str, mg: &ModelGraph) -> Result<usize, ModelGraphError> {
        let model = mg.model(node).ok_or(ModelGraphError::MissingModel(node))?;
        let local = model
            .var_index(name)
            .map_err(|_| ModelGraphError::UnknownVariable {
                node,
                name: name.to_string(),
            })?;
        Ok(self.offsets[&node] + local)
    }
}

/// One row of the connectivity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRow {
    pub edge: EdgeId,
    pub level: SubgraphId,
    /// (global variable index, coefficient), ascending by index.
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Sparse connectivity matrix with row and column block accessors.
#[derive(Debug, Clone)]
pub struct ConnectivityMatrix {
    pub num_vars: usize,
    pub rows: Vec<LinkRow>,
    node_offsets: BTreeMap<NodeId, usize>,
    node_widths: BTreeMap<NodeId, usize>,
}

impl ConnectivityMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Row block for an edge, if the edge carries a link row.
    pub fn row_block(&self, e: EdgeId) -> Option<&LinkRow> {
        self.rows.iter().find(|r| r.edge == e)
    }

    /// Column block for a node: (row index, node-local column, coefficient).
    pub fn col_block(&self, n: NodeId) -> Vec<(usize, usize, f64)> {
        let Some(&offset) = self.node_offsets.get(&n) else {
            return Vec::new();
        };
        let width = self.node_widths[&n];
        let mut out = Vec::new();
        for (ri, row) in self.rows.iter().enumerate() {
            for &(col, v) in &row.terms {
                if col >= offset && col < offset + width {
                    out.push((ri, col - offset, v));
                }
            }
        }
        out
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (ri, row) in self.rows.iter().enumerate() {
            for &(col, v) in &row.terms {
                out.push((ri, col, v));
            }
        }
        out
    }
}

/// Per-node slice of a flattened problem.
#[derive(Debug, Clone)]
pub struct NodeBlock {
    pub node: NodeId,
    pub offset: usize,
    pub num_vars: usize,
    pub equalities: Vec<Expr>,
    pub inequalities: Vec<Expr>,
    pub objective: Option<Expr>,
    pub data: Vec<f64>,
    pub var_names: Vec<String>,
}

impl NodeBlock {
    pub fn local<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.offset..self.offset + self.num_vars]
    }
}

/// A model graph stacked into one optimization problem: variables ordered by
/// (node id, local index), all node constraints, summed objective and link
/// rows from every level (parents before children).
#[derive(Debug, Clone)]
pub struct FlattenedProblem {
    pub var_node: Vec<(NodeId, usize)>,
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub start: Vec<f64>,
    pub node_blocks: Vec<NodeBlock>,
    pub links: Vec<LinkRow>,
}

impl FlattenedProblem {
    pub fn num_vars(&self) -> usize {
        self.var_node.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.node_blocks.iter().map(|b| b.equalities.len()).sum()
    }

    pub fn num_inequalities(&self) -> usize {
        self.node_blocks.iter().map(|b| b.inequalities.len()).sum()
    }

    pub fn has_inequalities(&self) -> bool {
        self.num_inequalities() > 0
    }

    pub fn local_name(&self, global: usize) -> &str {
        let (_, _) = self.var_node[global];
        let full = &self.names[global];
        match full.split_once('.') {
            Some((_, name)) => name,
            None => full,
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mut total = 0.0;
        for block in &self.node_blocks {
            if let Some(obj) = &block.objective {
                total += obj.evaluate(block.local(x), &block.data)?;
            }
        }
        Ok(total)
    }

    /// Values of all equality constraints in block order.
    pub fn equality_values(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::new();
        for block in &self.node_blocks {
            for eq in &block.equalities {
                out.push(eq.evaluate(block.local(x), &block.data)?);
            }
        }
        Ok(out)
    }

    /// Residuals `sum(coeff * x) - rhs` of every link row.
    pub fn link_residuals(&self, x: &[f64]) -> Vec<f64> {
        self.links
            .iter()
            .map(|row| {
                row.terms.iter().map(|&(c, v)| v * x[c]).sum::<f64>() - row.rhs
            })
            .collect()
    }

    pub fn pi_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (ri, row) in self.links.iter().enumerate() {
            for &(col, v) in &row.terms {
                out.push((ri, col, v));
            }
        }
        out
    }

    /// Canonical text dump: variables with bounds, constraints in prefix
    /// notation and link rows as triplets.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(&format!(
                "var {i} {name} lb={} ub={} start={}\n",
                self.lower[i], self.upper[i], self.start[i]
            ));
        }
        for block in &self.node_blocks {
            for eq in &block.equalities {
                out.push_str(&format!("{} eq {}\n", block.node, eq.prefix()));
            }
            for ineq in &block.inequalities {
                out.push_str(&format!("{} geq0 {}\n", block.node, ineq.prefix()));
            }
            if let Some(obj) = &block.objective {
                out.push_str(&format!("{} obj {}\n", block.node, obj.prefix()));
            }
        }
        for (ri, row) in self.links.iter().enumerate() {
            let terms: Vec<String> = row
                .terms
                .iter()
                .map(|(c, v)| format!("({c},{v})"))
                .collect();
            out.push_str(&format!(
                "link {ri} {} rhs={} {}\n",
                row.edge,
                row.rhs,
                terms.join(" ")
            ));
        }
        out
    }

    /// Link rows rendered order-independently, for multiset comparisons.
    pub fn canonical_link_rows(&self) -> Vec<String> {
        let mut rows: Vec<String> = self
            .links
            .iter()
            .map(|row| {
                let terms: Vec<String> = row
                    .terms
                    .iter()
                    .map(|(c, v)| format!("({c},{v})"))
                    .collect();
                format!("rhs={} {}", row.rhs, terms.join(" "))
            })
            .collect();
        rows.sort();
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ComponentModel;

    fn scalar_model(start: f64) -> ComponentModel {
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", start).unwrap();
        m.set_objective(x.square()).unwrap();
        m
    }

    #[test]
    fn three_node_link() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        let n3 = mg.add_node();
        for n in [n1, n2, n3] {
            mg.set_model(n, scalar_model(0.0)).unwrap();
        }
        let e = mg
            .add_link_constraint(&[(n1, "x", 1.0), (n2, "x", 1.0), (n3, "x", 1.0)], 0.0)
            .unwrap();
        assert_eq!(mg.hypergraph().support(e).unwrap().len(), 3);
        let pi = mg.connectivity_matrix().unwrap();
        assert_eq!(pi.num_rows(), 1);
        assert_eq!(pi.rows[0].terms, vec![(0, 1.0), (1, 1.0), (2, 1.0)]);
    }

    #[test]
    fn single_node_link_rejected() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        mg.set_model(n1, scalar_model(0.0)).unwrap();
        let err = mg.add_link_constraint(&[(n1, "x", 1.0), (n1, "x", -1.0)], 0.0);
        assert!(matches!(err, Err(ModelGraphError::SingleNodeLink)));
    }

    #[test]
    fn model_swap_keeps_links_and_dangles_on_rename() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        mg.set_model(n1, scalar_model(0.0)).unwrap();
        mg.set_model(n2, scalar_model(0.0)).unwrap();
        mg.add_link_constraint(&[(n1, "x", 1.0), (n2, "x", -1.0)], 0.0)
            .unwrap();
        // same variable names: still fine
        mg.set_model(n1, scalar_model(2.0)).unwrap();
        assert!(mg.validate().is_ok());
        // drop `x`: link dangles
        let mut other = ComponentModel::new();
        other.add_variable("y", 0.0).unwrap();
        mg.set_model(n1, other).unwrap();
        assert!(matches!(
            mg.validate(),
            Err(ModelGraphError::DanglingLink { .. })
        ));
    }

    #[test]
    fn no_links_empty_matrix() {
        let mut mg = ModelGraph::new();
        let n = mg.add_node();
        mg.set_model(n, scalar_model(1.0)).unwrap();
        let pi = mg.connectivity_matrix().unwrap();
        assert_eq!(pi.num_rows(), 0);
        let flat = mg.aggregate().unwrap();
        assert_eq!(flat.num_vars(), 1);
        assert!(flat.links.is_empty());
        assert_eq!(flat.objective_value(&[2.0]).unwrap(), 4.0);
    }

    #[test]
    fn zero_blocks_for_unsupported_nodes() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        let n3 = mg.add_node();
        for n in [n1, n2, n3] {
            mg.set_model(n, scalar_model(0.0)).unwrap();
        }
        let e1 = mg
            .add_link_constraint(&[(n1, "x", 1.0), (n2, "x", 1.0)], 0.0)
            .unwrap();
        let e2 = mg
            .add_link_constraint(&[(n2, "x", 1.0), (n3, "x", 1.0)], 0.0)
            .unwrap();
        let pi = mg.connectivity_matrix().unwrap();
        let r1 = pi.row_block(e1).unwrap();
        assert!(r1.terms.iter().all(|&(c, _)| c != 2));
        let r2 = pi.row_block(e2).unwrap();
        assert!(r2.terms.iter().all(|&(c, _)| c != 0));
        // column block of n3 touches only the second row
        let cb = pi.col_block(n3);
        assert_eq!(cb, vec![(1, 0, 1.0)]);
    }

    #[test]
    fn two_level_aggregation_orders_rows_parent_first() {
        let mut mg = ModelGraph::new();
        let nodes: Vec<NodeId> = (0..6).map(|_| mg.add_node()).collect();
        for &n in &nodes {
            mg.set_model(n, scalar_model(0.0)).unwrap();
        }
        let s1 = mg.add_subgraph(ROOT).unwrap();
        let s2 = mg.add_subgraph(ROOT).unwrap();
        for &n in &nodes[..3] {
            mg.assign_node(s1, n).unwrap();
        }
        for &n in &nodes[3..] {
            mg.assign_node(s2, n).unwrap();
        }
        let e1 = mg
            .add_link_constraint_in(
                s1,
                &[(nodes[0], "x", 1.0), (nodes[1], "x", 1.0), (nodes[2], "x", 1.0)],
                0.0,
            )
            .unwrap();
        let e2 = mg
            .add_link_constraint_in(s2, &[(nodes[3], "x", 1.0), (nodes[4], "x", 1.0)], 0.0)
            .unwrap();
        let e3 = mg
            .add_link_constraint_in(s2, &[(nodes[4], "x", 1.0), (nodes[5], "x", 1.0)], 0.0)
            .unwrap();
        let e4 = mg
            .add_link_constraint(&[(nodes[2], "x", 1.0), (nodes[3], "x", -1.0)], 0.0)
            .unwrap();
        let flat = mg.aggregate().unwrap();
        let order: Vec<EdgeId> = flat.links.iter().map(|r| r.edge).collect();
        assert_eq!(order, vec![e4, e1, e2, e3]);
    }

    #[test]
    fn three_level_row_count() {
        let mut mg = ModelGraph::new();
        let nodes: Vec<NodeId> = (0..4).map(|_| mg.add_node()).collect();
        for &n in &nodes {
            mg.set_model(n, scalar_model(0.0)).unwrap();
        }
        let s1 = mg.add_subgraph(ROOT).unwrap();
        for &n in &nodes {
            mg.assign_node(s1, n).unwrap();
        }
        let s2 = mg.add_subgraph(s1).unwrap();
        mg.assign_node(s2, nodes[0]).unwrap();
        mg.assign_node(s2, nodes[1]).unwrap();
        mg.add_link_constraint(&[(nodes[2], "x", 1.0), (nodes[3], "x", 1.0)], 0.0)
            .unwrap();
        mg.add_link_constraint_in(s1, &[(nodes[1], "x", 1.0), (nodes[2], "x", 1.0)], 0.0)
            .unwrap();
        mg.add_link_constraint_in(s2, &[(nodes[0], "x", 1.0), (nodes[1], "x", 1.0)], 0.0)
            .unwrap();
        let flat = mg.aggregate().unwrap();
        assert_eq!(flat.links.len(), 3);
        let levels: Vec<SubgraphId> = flat.links.iter().map(|r| r.level).collect();
        assert_eq!(levels, vec![ROOT, s1, s2]);
    }

    #[test]
    fn data_changes_values_not_sparsity() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", 0.0).unwrap();
        let d = m.add_data("demand", 1.0).unwrap();
        m.add_equality(x.clone() - d).unwrap();
        m.set_objective(x.square()).unwrap();
        mg.set_model(n1, m).unwrap();
        mg.set_model(n2, scalar_model(0.0)).unwrap();
        mg.add_link_constraint(&[(n1, "x", 1.0), (n2, "x", -1.0)], 0.0)
            .unwrap();
        let f1 = mg.aggregate().unwrap();
        mg.set_data(n1, "demand", 3.0).unwrap();
        let f2 = mg.aggregate().unwrap();
        assert_eq!(f1.pi_triplets(), f2.pi_triplets());
        assert_ne!(
            f1.equality_values(&[0.0, 0.0]).unwrap(),
            f2.equality_values(&[0.0, 0.0]).unwrap()
        );
        assert!(matches!(
            mg.set_data(n1, "nope", 0.0),
            Err(ModelGraphError::Model(ModelError::UnknownData(_)))
        ));
    }

    #[test]
    fn warm_start_copies_solution() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        mg.set_model(n1, scalar_model(0.0)).unwrap();
        mg.set_model(n2, scalar_model(0.0)).unwrap();
        let flat = mg.aggregate().unwrap();
        mg.warm_start_from(&flat, &[1.5, -2.5]);
        assert_eq!(mg.model(n1).unwrap().start_point(), vec![1.5]);
        assert_eq!(mg.model(n2).unwrap().start_point(), vec![-2.5]);
    }

    #[test]
    fn json_round_trip() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        mg.set_model(n1, scalar_model(1.0)).unwrap();
        mg.set_model(n2, scalar_model(2.0)).unwrap();
        mg.add_link_constraint(&[(n1, "x", 1.0), (n2, "x", 1.0)], 0.5)
            .unwrap();
        let text = mg.to_json();
        let back = ModelGraph::from_json(&text).unwrap();
        assert_eq!(back.node_count(), 2);
        assert_eq!(back.link_count(), 1);
        assert_eq!(back.aggregate().unwrap().dump(), mg.aggregate().unwrap().dump());
    }

    #[test]
    fn equality_form_replaces_inequalities() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", 2.0).unwrap();
        m.add_inequality(x.clone() - 1.0).unwrap();
        m.set_objective(x.square()).unwrap();
        mg.set_model(n1, m).unwrap();
        mg.set_model(n2, scalar_model(0.0)).unwrap();
        mg.add_link_constraint(&[(n1, "x", 1.0), (n2, "x", -1.0)], 0.0)
            .unwrap();
        let eq = mg.to_equality_form().unwrap();
        let flat = eq.aggregate().unwrap();
        assert!(!flat.has_inequalities());
        assert_eq!(flat.num_equalities(), 1);
        // slack started at g(start) = 1
        assert_eq!(eq.model(n1).unwrap().start_point(), vec![2.0, 1.0]);
    }
}
