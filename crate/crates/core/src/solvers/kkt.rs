//! Block-bordered KKT systems: assembly from a flattened problem, direct and
//! Schur-complement solves, and full-step Newton for equality-constrained
//! problems.
//!
//! Each node contributes a saddle block `K_n = [[W_n, J_n'], [J_n, 0]]` with
//! `W_n` the Hessian of the node Lagrangian and `J_n` the node constraint
//! Jacobian; link rows couple the blocks through a border built from the
//! connectivity matrix. The Schur path factors each node block independently
//! and solves the dense complement `S = -sum_n  Pi_n K_n^-1 Pi_n'` in the
//! link multipliers.

use super::linalg::{lu_solve, BlockFactor, LinAlgError, Triplets};
use crate::expr::EvalError;
use crate::hypergraph::NodeId;
use crate::modelgraph::FlattenedProblem;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KktError {
    #[error("problem has inequality constraints; convert them to equalities first")]
    HasInequalities,
    #[error("dimension mismatch: expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular node block at {0}")]
    SingularBlock(NodeId),
    #[error("singular Schur complement")]
    SingularSchur,
    #[error("singular KKT matrix")]
    Singular,
    #[error("no convergence in {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Schur,
}

#[derive(Debug, Clone, Copy)]
pub struct KktOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
}

impl Default for KktOptions {
    fn default() -> Self {
        KktOptions {
            tol: 1e-8,
            max_iter: 50,
            method: SolveMethod::Schur,
        }
    }
}

/// One node's saddle block and its right-hand side (minus the KKT residual).
/// The block matrix is kept sparse so banded factorizations stay linear in
/// the block size.
#[derive(Debug, Clone)]
pub struct KktNodeBlock {
    pub node: NodeId,
    pub dim_x: usize,
    pub dim_c: usize,
    pub k: Triplets,
    pub rhs: DVector<f64>,
    /// Border block over this node's (x, lambda) columns; lambda columns zero.
    pub border: DMatrix<f64>,
    /// Link rows with at least one nonzero on this node.
    pub active_rows: Vec<usize>,
}

impl KktNodeBlock {
    pub fn dim(&self) -> usize {
        self.dim_x + self.dim_c
    }
}

#[derive(Debug, Clone)]
pub struct BlockKkt {
    pub blocks: Vec<KktNodeBlock>,
    pub link_rows: usize,
    /// Minus the link residual `-(Pi x - rhs)`.
    pub link_rhs: DVector<f64>,
}

impl BlockKkt {
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum::<usize>() + self.link_rows
    }

    /// Infinity norm of the KKT residual this system was assembled at.
    pub fn residual_norm(&self) -> f64 {
        let mut norm = self.link_rhs.amax();
        if self.link_rhs.is_empty() {
            norm = 0.0;
        }
        for b in &self.blocks {
            if !b.rhs.is_empty() {
                norm = norm.max(b.rhs.amax());
            }
        }
        norm
    }

    /// Dense assembly of the full bordered system, for the direct path.
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.total_dim();
        let mut a = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        let border_at = n - self.link_rows;
        let mut offset = 0;
        for b in &self.blocks {
            let d = b.dim();
            for &(r, c, v) in &b.k.entries {
                a[(offset + r, offset + c)] += v;
            }
            for r in 0..self.link_rows {
                for c in 0..d {
                    let v = b.border[(r, c)];
                    if v != 0.0 {
                        a[(border_at + r, offset + c)] = v;
                        a[(offset + c, border_at + r)] = v;
                    }
                }
            }
            rhs.rows_mut(offset, d).copy_from(&b.rhs);
            offset += d;
        }
        rhs.rows_mut(border_at, self.link_rows)
            .copy_from(&self.link_rhs);
        (a, rhs)
    }
}

/// Primal-dual step: per-node `(dx, dlambda)` plus the link multiplier step.
#[derive(Debug, Clone)]
pub struct KktStep {
    pub node_steps: Vec<DVector<f64>>,
    pub link_step: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub x: Vec<f64>,
    pub node_duals: Vec<Vec<f64>>,
    pub link_duals: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Assembles the block-bordered KKT system at (`point`, `node_duals`,
/// `link_duals`). The flattened problem must be equality-constrained.
pub fn assemble_kkt(
    flat: &FlattenedProblem,
    point: &[f64],
    node_duals: &[Vec<f64>],
    link_duals: &[f64],
) -> Result<BlockKkt, KktError> {
    if flat.has_inequalities() {
        return Err(KktError::HasInequalities);
    }
    if point.len() != flat.num_vars() {
        return Err(KktError::DimensionMismatch {
            expected: flat.num_vars(),
            got: point.len(),
        });
    }
    if node_duals.len() != flat.node_blocks.len() {
        return Err(KktError::DimensionMismatch {
            expected: flat.node_blocks.len(),
            got: node_duals.len(),
        });
    }
    let m = flat.links.len();
    if link_duals.len() != m {
        return Err(KktError::DimensionMismatch {
            expected: m,
            got: link_duals.len(),
        });
    }

    let mut blocks = Vec::with_capacity(flat.node_blocks.len());
    for (bi, nb) in flat.node_blocks.iter().enumerate() {
        let nx = nb.num_vars;
        let nc = nb.equalities.len();
        let local = nb.local(point);
        let duals = &node_duals[bi];
        if duals.len() != nc {
            return Err(KktError::DimensionMismatch {
                expected: nc,
                got: duals.len(),
            });
        }

        // K_n = [[W, J'], [J, 0]] assembled sparsely:
        // W = Hessian of f + sum lambda_j c_j over local variables
        let dim = nx + nc;
        let mut k = Triplets::new(dim);
        if let Some(obj) = &nb.objective {
            obj.accumulate_hessian(local, &nb.data, 1.0, |r, c, v| {
                k.push(r, c, v);
            })?;
        }
        for (j, eq) in nb.equalities.iter().enumerate() {
            eq.accumulate_hessian(local, &nb.data, duals[j], |r, c, v| {
                k.push(r, c, v);
            })?;
        }

        // J rows (sparse) and constraint values
        let mut jac_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(nc);
        let mut cval = DVector::zeros(nc);
        for (j, eq) in nb.equalities.iter().enumerate() {
            cval[j] = eq.evaluate(local, &nb.data)?;
            let g = eq.gradient(local, &nb.data)?;
            let mut row = Vec::new();
            for (c, gv) in g.iter().enumerate() {
                if *gv != 0.0 {
                    row.push((c, *gv));
                    k.push(nx + j, c, *gv);
                    k.push(c, nx + j, *gv);
                }
            }
            jac_rows.push(row);
        }

        // gradient of the Lagrangian in x_n
        let mut grad = DVector::zeros(nx);
        if let Some(obj) = &nb.objective {
            let g = obj.gradient(local, &nb.data)?;
            for (c, gv) in g.iter().enumerate() {
                grad[c] = *gv;
            }
        }
        for (j, row) in jac_rows.iter().enumerate() {
            if duals[j] != 0.0 {
                for &(c, gv) in row {
                    grad[c] += duals[j] * gv;
                }
            }
        }

        // border block and its contribution to the x-gradient
        let mut border = DMatrix::zeros(m, dim);
        let mut active_rows = Vec::new();
        for (r, row) in flat.links.iter().enumerate() {
            let mut touched = false;
            for &(gc, v) in &row.terms {
                if gc >= nb.offset && gc < nb.offset + nx {
                    border[(r, gc - nb.offset)] = v;
                    grad[gc - nb.offset] += link_duals[r] * v;
                    touched = true;
                }
            }
            if touched {
                active_rows.push(r);
            }
        }

        let mut rhs = DVector::zeros(dim);
        for c in 0..nx {
            rhs[c] = -grad[c];
        }
        for j in 0..nc {
            rhs[nx + j] = -cval[j];
        }

        blocks.push(KktNodeBlock {
            node: nb.node,
            dim_x: nx,
            dim_c: nc,
            k,
            rhs,
            border,
            active_rows,
        });
    }

    let link_res = flat.link_residuals(point);
    let link_rhs = DVector::from_iterator(m, link_res.iter().map(|v| -v));

    Ok(BlockKkt {
        blocks,
        link_rows: m,
        link_rhs,
    })
}

/// Solves the block-bordered system for the primal-dual step.
pub fn solve_block(kkt: &BlockKkt, method: SolveMethod) -> Result<KktStep, KktError> {
    match method {
        SolveMethod::Direct => solve_direct(kkt),
        SolveMethod::Schur => solve_schur(kkt),
    }
}

fn solve_direct(kkt: &BlockKkt) -> Result<KktStep, KktError> {
    let (a, rhs) = kkt.to_dense();
    let sol = lu_solve(&a, &rhs).map_err(|_| KktError::Singular)?;
    let mut node_steps = Vec::with_capacity(kkt.blocks.len());
    let mut offset = 0;
    for b in &kkt.blocks {
        node_steps.push(DVector::from(sol.rows(offset, b.dim()).clone_owned()));
        offset += b.dim();
    }
    let link_step = DVector::from(sol.rows(offset, kkt.link_rows).clone_owned());
    Ok(KktStep {
        node_steps,
        link_step,
    })
}

fn solve_schur(kkt: &BlockKkt) -> Result<KktStep, KktError> {
    let m = kkt.link_rows;
    let mut schur = DMatrix::zeros(m, m);
    let mut schur_rhs = kkt.link_rhs.clone();
    let mut factors = Vec::with_capacity(kkt.blocks.len());
    // per node: K_n^-1 rhs_n and K_n^-1 Pi_n' restricted to active rows
    let mut k_inv_rhs = Vec::with_capacity(kkt.blocks.len());
    let mut k_inv_border: Vec<Vec<(usize, DVector<f64>)>> = Vec::with_capacity(kkt.blocks.len());

    for b in &kkt.blocks {
        let factor =
            BlockFactor::factor(&b.k).map_err(|_| KktError::SingularBlock(b.node))?;
        let w = solve_with(&factor, &b.rhs, b.node)?;
        let mut cols = Vec::with_capacity(b.active_rows.len());
        for &r in &b.active_rows {
            let pi_row = DVector::from_fn(b.dim(), |c, _| b.border[(r, c)]);
            let col = solve_with(&factor, &pi_row, b.node)?;
            cols.push((r, col));
        }
        // S -= Pi_n K_n^-1 Pi_n'  and  rhs_S -= Pi_n K_n^-1 rhs_n
        for &r in &b.active_rows {
            let mut dot = 0.0;
            for c in 0..b.dim() {
                dot += b.border[(r, c)] * w[c];
            }
            schur_rhs[r] -= dot;
        }
        for &r1 in &b.active_rows {
            for (r2, col) in &cols {
                let mut dot = 0.0;
                for c in 0..b.dim() {
                    dot += b.border[(r1, c)] * col[c];
                }
                schur[(r1, *r2)] -= dot;
            }
        }
        factors.push(factor);
        k_inv_rhs.push(w);
        k_inv_border.push(cols);
    }

    let link_step = if m > 0 {
        lu_solve(&schur, &schur_rhs).map_err(|_| KktError::SingularSchur)?
    } else {
        DVector::zeros(0)
    };

    // back substitution: dw_n = K_n^-1 (rhs_n - Pi_n' dlambda)
    let mut node_steps = Vec::with_capacity(kkt.blocks.len());
    for (bi, _b) in kkt.blocks.iter().enumerate() {
        let mut dw = k_inv_rhs[bi].clone();
        for (r, col) in &k_inv_border[bi] {
            let lam = link_step[*r];
            if lam != 0.0 {
                dw -= col * lam;
            }
        }
        node_steps.push(dw);
    }

    Ok(KktStep {
        node_steps,
        link_step,
    })
}

fn solve_with(
    factor: &BlockFactor,
    rhs: &DVector<f64>,
    node: NodeId,
) -> Result<DVector<f64>, KktError> {
    factor.solve(rhs).map_err(|e| match e {
        LinAlgError::Singular => KktError::SingularBlock(node),
        _ => KktError::SingularBlock(node),
    })
}

/// Full-step Newton on the KKT conditions of an equality-constrained
/// flattened problem, starting from the model start values and zero duals.
pub fn newton_kkt(flat: &FlattenedProblem, options: KktOptions) -> Result<KktSolution, KktError> {
    let mut x = flat.start.clone();
    let mut node_duals: Vec<Vec<f64>> = flat
        .node_blocks
        .iter()
        .map(|b| vec![0.0; b.equalities.len()])
        .collect();
    let mut link_duals = vec![0.0; flat.links.len()];

    let mut iterations = 0;
    loop {
        let kkt = assemble_kkt(flat, &x, &node_duals, &link_duals)?;
        let residual = kkt.residual_norm();
        if residual <= options.tol {
            return Ok(KktSolution {
                x,
                node_duals,
                link_duals,
                iterations,
                residual,
            });
        }
        if iterations >= options.max_iter {
            return Err(KktError::MaxIterations {
                iterations,
                residual,
            });
        }
        let step = solve_block(&kkt, options.method)?;
        for (bi, b) in flat.node_blocks.iter().enumerate() {
            let dw = &step.node_steps[bi];
            for c in 0..b.num_vars {
                x[b.offset + c] += dw[c];
            }
            for j in 0..b.equalities.len() {
                node_duals[bi][j] += dw[b.num_vars + j];
            }
        }
        for (r, d) in link_duals.iter_mut().enumerate() {
            *d += step.link_step[r];
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ComponentModel;
    use crate::modelgraph::ModelGraph;

    fn quadratic_node(target: f64, start: f64) -> ComponentModel {
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", start).unwrap();
        m.set_objective((x - target).square()).unwrap();
        m
    }

    #[test]
    fn single_node_unconstrained() {
        // min 0.5 x^2: K = [1], rhs = -x
        let mut mg = ModelGraph::new();
        let n = mg.add_node();
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", 3.0).unwrap();
        m.set_objective(x.square() * 0.5).unwrap();
        mg.set_model(n, m).unwrap();
        let flat = mg.aggregate().unwrap();
        let kkt = assemble_kkt(&flat, &[3.0], &[vec![]], &[]).unwrap();
        assert_eq!(kkt.blocks[0].k.to_dense()[(0, 0)], 1.0);
        assert_eq!(kkt.blocks[0].rhs[0], -3.0);
    }

    #[test]
    fn constrained_scalar_analytic() {
        // min 0.5 x^2 s.t. x - 1 = 0 -> x = 1, lambda = -1
        let mut mg = ModelGraph::new();
        let n = mg.add_node();
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", 0.0).unwrap();
        m.set_objective(x.clone().square() * 0.5).unwrap();
        m.add_equality(x - 1.0).unwrap();
        mg.set_model(n, m).unwrap();
        let flat = mg.aggregate().unwrap();
        let sol = newton_kkt(&flat, KktOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-10);
        assert!((sol.node_duals[0][0] + 1.0).abs() < 1e-10);
        assert_eq!(sol.iterations, 1);
    }

    fn linked_pair(a0: f64, a1: f64) -> ModelGraph {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        mg.set_model(n1, quadratic_node(a0, 0.0)).unwrap();
        mg.set_model(n2, quadratic_node(a1, 0.0)).unwrap();
        mg.add_link_constraint(&[(n1, "x", 1.0), (n2, "x", -1.0)], 0.0)
            .unwrap();
        mg
    }

    #[test]
    fn linked_pair_border_and_solution() {
        let mg = linked_pair(0.0, 2.0);
        let flat = mg.aggregate().unwrap();
        let kkt = assemble_kkt(&flat, &[0.0, 0.0], &[vec![], vec![]], &[0.0]).unwrap();
        assert_eq!(kkt.blocks[0].border[(0, 0)], 1.0);
        assert_eq!(kkt.blocks[1].border[(0, 0)], -1.0);
        // min (x1-0)^2 + (x2-2)^2 s.t. x1 = x2  ->  x = (1, 1)
        let sol = newton_kkt(&flat, KktOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.x[1] - 1.0).abs() < 1e-9);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn schur_equals_direct_on_linked_pair() {
        let mg = linked_pair(-1.0, 3.0);
        let flat = mg.aggregate().unwrap();
        let kkt = assemble_kkt(&flat, &flat.start, &[vec![], vec![]], &[0.0]).unwrap();
        let direct = solve_block(&kkt, SolveMethod::Direct).unwrap();
        let schur = solve_block(&kkt, SolveMethod::Schur).unwrap();
        for (a, b) in direct.node_steps.iter().zip(&schur.node_steps) {
            assert!((a - b).amax() < 1e-10);
        }
        assert!((direct.link_step - schur.link_step).amax() < 1e-10);
    }

    #[test]
    fn zero_border_separates() {
        let mut mg = ModelGraph::new();
        let n1 = mg.add_node();
        let n2 = mg.add_node();
        mg.set_model(n1, quadratic_node(1.0, 0.0)).unwrap();
        mg.set_model(n2, quadratic_node(-2.0, 0.0)).unwrap();
        let flat = mg.aggregate().unwrap();
        let sol = newton_kkt(&flat, KktOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-10);
        assert!((sol.x[1] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn inequalities_rejected() {
        let mut mg = ModelGraph::new();
        let n = mg.add_node();
        let mut m = ComponentModel::new();
        let x = m.add_variable("x", 0.0).unwrap();
        m.add_inequality(x.clone()).unwrap();
        m.set_objective(x.square()).unwrap();
        mg.set_model(n, m).unwrap();
        let flat = mg.aggregate().unwrap();
        assert!(matches!(
            assemble_kkt(&flat, &[0.0], &[vec![]], &[]),
            Err(KktError::HasInequalities)
        ));
    }

    #[test]
    fn quadratic_w_constant_in_point() {
        let mg = linked_pair(0.5, 1.5);
        let flat = mg.aggregate().unwrap();
        let k1 = assemble_kkt(&flat, &[0.0, 0.0], &[vec![], vec![]], &[0.0]).unwrap();
        let k2 = assemble_kkt(&flat, &[5.0, -3.0], &[vec![], vec![]], &[0.0]).unwrap();
        assert_eq!(k1.blocks[0].k.to_dense(), k2.blocks[0].k.to_dense());
        assert_eq!(k1.blocks[1].k.to_dense(), k2.blocks[1].k.to_dense());
    }
}
