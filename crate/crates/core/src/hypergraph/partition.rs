//! k-way partitioning by recursive bisection with Kernighan-Lin refinement.
//!
//! The refinement objective is the number of cut hyperedges. Swaps keep part
//! sizes exact, so the balance fixed by the size targets (differing by at
//! most one node between parts) is preserved. All ties break toward the
//! lowest node id, which makes the result deterministic for a fixed input.

use super::{EdgeId, GraphError, Hypergraph, NodeId};
use serde::{Deserialize, Serialize};

pub use super::GraphError as PartitionError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub k: usize,
    /// Part index in `0..k` for every node, indexed by node id.
    pub assignment: Vec<usize>,
    /// Edges whose support spans at least two parts, ascending by id.
    pub cut_edges: Vec<EdgeId>,
}

impl Partition {
    pub fn part_of(&self, n: NodeId) -> usize {
        self.assignment[n.0]
    }

    pub fn part_nodes(&self, part: usize) -> Vec<NodeId> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p == part)
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    /// Recomputes the cut-edge list from the assignment.
    pub fn recompute_cut(&self, g: &Hypergraph) -> Vec<EdgeId> {
        cut_edges(g, &self.assignment)
    }
}

fn cut_edges(g: &Hypergraph, assignment: &[usize]) -> Vec<EdgeId> {
    g.edges()
        .filter(|&e| {
            let support = g.support(e).expect("edge of the same graph");
            let first = assignment[support[0].0];
            support.iter().any(|n| assignment[n.0] != first)
        })
        .collect()
}

pub(super) fn partition(g: &Hypergraph, k: usize) -> Result<Partition, GraphError> {
    let n = g.node_count();
    if k == 0 || k > n {
        return Err(GraphError::BadK { k, nodes: n });
    }
    // Balanced target sizes: the first (n mod k) parts get one extra node.
    let base = n / k;
    let extra = n % k;
    let sizes: Vec<usize> = (0..k).map(|i| base + usize::from(i < extra)).collect();

    let mut assignment = vec![0usize; n];
    let all: Vec<NodeId> = g.nodes().collect();
    bisect(g, &all, &sizes, 0, &mut assignment);

    Ok(Partition {
        k,
        assignment: assignment.clone(),
        cut_edges: cut_edges(g, &assignment),
    })
}

/// Recursively splits `nodes` into the parts `first_part..first_part+sizes.len()`.
fn bisect(
    g: &Hypergraph,
    nodes: &[NodeId],
    sizes: &[usize],
    first_part: usize,
    assignment: &mut Vec<usize>,
) {
    if sizes.len() == 1 {
        for &n in nodes {
            assignment[n.0] = first_part;
        }
        return;
    }
    let half = sizes.len().div_ceil(2);
    let left_target: usize = sizes[..half].iter().sum();

    // Initial split in id order, then KL swap refinement.
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    let mut left: Vec<NodeId> = sorted[..left_target].to_vec();
    let mut right: Vec<NodeId> = sorted[left_target..].to_vec();
    kernighan_lin(g, &mut left, &mut right);

    bisect(g, &left, &sizes[..half], first_part, assignment);
    bisect(g, &right, &sizes[half..], first_part + half, assignment);
}

/// Edges fully inside the current node subset; edges reaching outside are cut
/// against an already-fixed part no matter how the subset is split.
fn inner_edges(g: &Hypergraph, members: &[bool]) -> Vec<Vec<NodeId>> {
    g.edges()
        .filter_map(|e| {
            let support = g.support(e).expect("edge of the same graph");
            if support.iter().all(|n| members[n.0]) {
                Some(support.to_vec())
            } else {
                None
            }
        })
        .collect()
}

fn cut_count(edges: &[Vec<NodeId>], side: &[bool]) -> usize {
    edges
        .iter()
        .filter(|support| {
            let first = side[support[0].0];
            support.iter().any(|n| side[n.0] != first)
        })
        .count()
}

/// Classic KL: repeated passes of locked pair swaps, keeping the best prefix
/// of each pass when it strictly improves the cut.
fn kernighan_lin(g: &Hypergraph, left: &mut Vec<NodeId>, right: &mut Vec<NodeId>) {
    let n_total = g.node_count();
    let mut members = vec![false; n_total];
    for &n in left.iter().chain(right.iter()) {
        members[n.0] = true;
    }
    let edges = inner_edges(g, &members);
    if edges.is_empty() || left.is_empty() || right.is_empty() {
        left.sort_unstable();
        right.sort_unstable();
        return;
    }

    // side[n] == true means "left" for subset members.
    let mut side = vec![false; n_total];
    for &n in left.iter() {
        side[n.0] = true;
    }
    let all_members: Vec<NodeId> = {
        let mut v: Vec<NodeId> = left.iter().chain(right.iter()).copied().collect();
        v.sort_unstable();
        v
    };

    loop {
        // memberships as of the current side assignment
        let cur_left: Vec<NodeId> = all_members.iter().copied().filter(|n| side[n.0]).collect();
        let cur_right: Vec<NodeId> = all_members.iter().copied().filter(|n| !side[n.0]).collect();
        let mut locked = vec![false; n_total];
        let mut trial = side.clone();
        let mut best_gain: i64 = 0;
        let mut best_prefix = 0usize;
        let mut cumulative: i64 = 0;
        let mut swaps: Vec<(NodeId, NodeId)> = Vec::new();
        let base_cut = cut_count(&edges, &trial) as i64;
        let mut current_cut = base_cut;

        let max_swaps = cur_left.len().min(cur_right.len());
        for _ in 0..max_swaps {
            // Best unlocked swap, ties toward lowest (a, b) ids.
            let mut best: Option<(i64, NodeId, NodeId)> = None;
            for &a in cur_left.iter() {
                if locked[a.0] {
                    continue;
                }
                for &b in cur_right.iter() {
                    if locked[b.0] {
                        continue;
                    }
                    trial[a.0] = false;
                    trial[b.0] = true;
                    let c = cut_count(&edges, &trial) as i64;
                    trial[a.0] = true;
                    trial[b.0] = false;
                    let gain = current_cut - c;
                    let better = match best {
                        None => true,
                        Some((bg, ba, bb)) => gain > bg || (gain == bg && (a, b) < (ba, bb)),
                    };
                    if better {
                        best = Some((gain, a, b));
                    }
                }
            }
            let Some((gain, a, b)) = best else { break };
            trial[a.0] = false;
            trial[b.0] = true;
            locked[a.0] = true;
            locked[b.0] = true;
            current_cut -= gain;
            cumulative += gain;
            swaps.push((a, b));
            if cumulative > best_gain {
                best_gain = cumulative;
                best_prefix = swaps.len();
            }
        }

        if best_gain <= 0 {
            break;
        }
        for &(a, b) in &swaps[..best_prefix] {
            side[a.0] = false;
            side[b.0] = true;
        }
    }

    let mut new_left = Vec::with_capacity(left.len());
    let mut new_right = Vec::with_capacity(right.len());
    for &n in left.iter().chain(right.iter()) {
        if side[n.0] {
            new_left.push(n);
        } else {
            new_right.push(n);
        }
    }
    new_left.sort_unstable();
    new_right.sort_unstable();
    *left = new_left;
    *right = new_right;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::Hypergraph;

    fn path(n: usize) -> Hypergraph {
        let mut g = Hypergraph::new();
        let nodes: Vec<NodeId> = (0..n).map(|_| g.add_node()).collect();
        for w in nodes.windows(2) {
            g.add_edge(&[w[0], w[1]]).unwrap();
        }
        g
    }

    /// Brute force over all balanced bipartitions of `g`.
    fn best_balanced_bipartition_cut(g: &Hypergraph) -> usize {
        let n = g.node_count();
        let left_size = n / 2;
        let mut best = usize::MAX;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != left_size {
                continue;
            }
            let assignment: Vec<usize> =
                (0..n).map(|i| usize::from(mask & (1 << i) != 0)).collect();
            let cut = g
                .edges()
                .filter(|&e| {
                    let s = g.support(e).unwrap();
                    s.iter().any(|x| assignment[x.0] != assignment[s[0].0])
                })
                .count();
            best = best.min(cut);
        }
        best
    }

    #[test]
    fn path4_bisection_matches_brute_force() {
        let g = path(4);
        let oracle = best_balanced_bipartition_cut(&g);
        assert_eq!(oracle, 1);
        let p = g.partition(2).unwrap();
        assert_eq!(p.cut_edges.len(), oracle);
        assert_eq!(p.part_nodes(0), vec![NodeId(0), NodeId(1)]);
        assert_eq!(p.part_nodes(1), vec![NodeId(2), NodeId(3)]);
    }

    #[test]
    fn k1_is_trivial() {
        let g = path(5);
        let p = g.partition(1).unwrap();
        assert!(p.cut_edges.is_empty());
        assert!(p.assignment.iter().all(|&a| a == 0));
    }

    #[test]
    fn bad_k_rejected() {
        let g = path(3);
        assert!(matches!(g.partition(0), Err(GraphError::BadK { .. })));
        assert!(matches!(g.partition(4), Err(GraphError::BadK { .. })));
    }

    /// Exact optimum over all contiguous k-way splits of a path graph,
    /// enumerated by dynamic programming over split points. Valid for graphs
    /// whose edges connect consecutive node ids only.
    fn contiguous_split_optimum(g: &Hypergraph, k: usize) -> usize {
        let n = g.node_count();
        let crossing = |m: usize| -> usize {
            // edges with one endpoint before m and one at or after m
            g.edges()
                .filter(|&e| {
                    let s = g.support(e).unwrap();
                    s.iter().any(|x| x.0 < m) && s.iter().any(|x| x.0 >= m)
                })
                .count()
        };
        let inf = usize::MAX / 2;
        // dp[j][i]: min cut splitting nodes 0..i into j contiguous segments
        let mut dp = vec![vec![inf; n + 1]; k + 1];
        for i in 1..=n {
            dp[1][i] = 0;
        }
        for j in 2..=k {
            for i in j..=n {
                for m in (j - 1)..i {
                    let c = dp[j - 1][m] + crossing(m);
                    dp[j][i] = dp[j][i].min(c);
                }
            }
        }
        dp[k][n]
    }

    #[test]
    fn path27_k13_matches_contiguous_optimum() {
        let g = path(27);
        let oracle = contiguous_split_optimum(&g, 13);
        assert_eq!(oracle, 12);
        let p = g.partition(13).unwrap();
        assert_eq!(p.cut_edges.len(), oracle);
        // balance within one node
        let mut sizes = vec![0usize; 13];
        for &a in &p.assignment {
            sizes[a] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
    }

    #[test]
    fn cut_edges_consistent_with_assignment() {
        let mut g = path(8);
        let nodes: Vec<NodeId> = g.nodes().collect();
        g.add_edge(&[nodes[0], nodes[3], nodes[6]]).unwrap();
        let p = g.partition(3).unwrap();
        assert_eq!(p.cut_edges, p.recompute_cut(&g));
    }
}
