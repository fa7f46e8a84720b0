//! Lagrangian dual decomposition over a model graph: node subproblems with
//! dualized link constraints, coordinated by a multiplier ascent step.

use crate::expr::Expr;
use crate::modelgraph::{ModelGraph, ModelGraphError};
use crate::solvers::kkt::{newton_kkt, KktError, KktOptions};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LagrangianError {
    #[error(transparent)]
    Graph(#[from] ModelGraphError),
    #[error("subproblem for node index {node} failed: {source}")]
    Subproblem {
        node: usize,
        #[source]
        source: KktError,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct LagrangianOptions {
    /// Multiplier step size; `None` picks 0.5/L with L estimated from the
    /// link row norms.
    pub alpha: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LagrangianOptions {
    fn default() -> Self {
        LagrangianOptions {
            alpha: None,
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagrangianStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LagrangianState {
    pub multipliers: Vec<f64>,
    pub alpha: f64,
    /// Per iteration: (dual value, infinity norm of the link residual).
    pub history: Vec<(f64, f64)>,
    pub iterations: usize,
    pub status: LagrangianStatus,
}

#[derive(Debug, Clone)]
pub struct LagrangianOutcome {
    /// Stacked primal iterate in flattened variable order.
    pub x: Vec<f64>,
    pub state: LagrangianState,
}

/// Runs dual decomposition: each iteration solves every node subproblem
/// `min f_n + lambda' Pi_n x_n` independently, then updates
/// `lambda <- lambda + alpha (Pi x - rhs)`.
pub fn lagrangian_solve(
    graph: &ModelGraph,
    options: &LagrangianOptions,
) -> Result<LagrangianOutcome, LagrangianError> {
    let flat = graph.aggregate()?;
    let m = flat.links.len();

    let alpha = options.alpha.unwrap_or_else(|| {
        let l = flat
            .links
            .iter()
            .map(|row| row.terms.iter().map(|&(_, v)| v * v).sum::<f64>())
            .fold(0.0_f64, f64::max);
        if l > 0.0 {
            0.5 / l
        } else {
            1.0
        }
    });

    let mut multipliers = vec![0.0; m];
    let mut x = flat.start.clone();
    let mut history = Vec::new();
    let mut status = LagrangianStatus::MaxIterations;
    let mut iterations = 0;

    for iter in 0..options.max_iter.max(1) {
        iterations = iter + 1;
        // per-node linear term coefficients from lambda' Pi
        let mut linear = vec![0.0; flat.num_vars()];
        for (r, row) in flat.links.iter().enumerate() {
            for &(c, v) in &row.terms {
                linear[c] += multipliers[r] * v;
            }
        }

        for (bi, block) in flat.node_blocks.iter().enumerate() {
            let mut sub = ModelGraph::new();
            let node = sub.add_node();
            let mut model = graph
                .model(block.node)
                .expect("aggregate guarantees a model")
                .clone();
            let mut term: Option<Expr> = None;
            for local in 0..block.num_vars {
                let coeff = linear[block.offset + local];
                if coeff != 0.0 {
                    let piece = Expr::var(local) * coeff;
                    term = Some(match term {
                        Some(t) => t + piece,
                        None => piece,
                    });
                }
            }
            if let Some(t) = term {
                model.add_to_objective(t).map_err(ModelGraphError::from)?;
            }
            // warm start from the current iterate
            for (local, name) in block.var_names.iter().enumerate() {
                let _ = model.set_start(name, x[block.offset + local]);
            }
            sub.set_model(node, model).map_err(LagrangianError::Graph)?;
            let sub_flat = sub.aggregate()?;
            // subproblems must be solved tighter than the outer tolerance,
            // or warm-started iterates stop tracking the multiplier updates
            let sub_options = KktOptions {
                tol: (options.tol * 1e-3).min(1e-10),
                ..KktOptions::default()
            };
            let sol = newton_kkt(&sub_flat, sub_options).map_err(|e| {
                LagrangianError::Subproblem {
                    node: bi,
                    source: e,
                }
            })?;
            x[block.offset..block.offset + block.num_vars].copy_from_slice(&sol.x);
        }

        let residuals = flat.link_residuals(&x);
        let res_norm = residuals.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
        let dual_value = flat.objective_value(&x).unwrap_or(f64::NAN)
            + multipliers
                .iter()
                .zip(&residuals)
                .map(|(l, r)| l * r)
                .sum::<f64>();
        history.push((dual_value, res_norm));

        if res_norm <= options.tol {
            status = LagrangianStatus::Converged;
            break;
        }
        for (l, r) in multipliers.iter_mut().zip(&residuals) {
            *l += alpha * r;
        }
    }

    Ok(LagrangianOutcome {
        x,
        state: LagrangianState {
            multipliers,
            alpha,
            history,
            iterations,
            status,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ComponentModel;
    use crate::solvers::kkt::{newton_kkt, KktOptions};

    fn tracking_pair(a: (f64, f64)) -> ModelGraph {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        for (n, target) in [(n1, a.0), (n2, a.1)] {
            let mut m = ComponentModel::new();
            let x = m.add_variable("x", 0.0).unwrap();
            m.set_objective((x - target).square()).unwrap();
            mg.set_model(n, m).unwrap();
        }
        mg.add_link_constraint(&[(n1, "x", 1.0), (n2, "x", -1.0)], 0.0)
            .unwrap();
        mg
    }

    #[test]
    fn two_node_qp_matches_flattened_solve() {
        let mg = tracking_pair((0.0, 2.0));
        let out = lagrangian_solve(
            &mg,
            &LagrangianOptions {
                alpha: Some(0.4),
                max_iter: 500,
                tol: 1e-9,
            },
        )
        .unwrap();
        assert_eq!(
            out.state.status,
            LagrangianStatus::Converged,
            "x = {:?}, lambda = {:?}",
            out.x,
            out.state.multipliers
        );
        assert!((out.x[0] - 1.0).abs() < 1e-7, "x = {:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-7);
        // multiplier converges to the dual of the flattened solve
        let flat = mg.aggregate().unwrap();
        let reference = newton_kkt(&flat, KktOptions::default()).unwrap();
        assert!((out.state.multipliers[0] - reference.link_duals[0]).abs() < 1e-6);
    }

    #[test]
    fn no_links_converges_immediately() {
        let mut mg = ModelGraph::new();
        let n = mg.add_node();
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", 5.0).unwrap();
        m.set_objective((x - 3.0).square()).unwrap();
        mg.set_model(n, m).unwrap();
        let out = lagrangian_solve(&mg, &LagrangianOptions::default()).unwrap();
        assert_eq!(out.state.iterations, 1);
        assert_eq!(out.state.status, LagrangianStatus::Converged);
        assert_eq!(out.state.history[0].1, 0.0);
    }

    #[test]
    fn zero_step_size_keeps_residual_constant() {
        let mg = tracking_pair((0.0, 2.0));
        let out = lagrangian_solve(
            &mg,
            &LagrangianOptions {
                alpha: Some(0.0),
                max_iter: 5,
                tol: 1e-12,
            },
        )
        .unwrap();
        assert_eq!(out.state.status, LagrangianStatus::MaxIterations);
        let residuals: Vec<f64> = out.state.history.iter().map(|h| h.1).collect();
        for r in &residuals[1..] {
            assert_eq!(*r, residuals[0]);
        }
    }
}
