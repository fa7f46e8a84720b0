//! Synchronous Benders decomposition for two-stage LPs: a master with an
//! epigraph variable collecting cutting planes, and per-scenario recourse
//! subproblems whose duals build one aggregate expected-value cut per round.

use crate::solvers::simplex::{simplex_solve, LinearProgram, LpStatus, Sense};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BendersError {
    #[error("master problem is infeasible")]
    MasterInfeasible,
    #[error("master problem is unbounded")]
    MasterUnbounded,
    #[error("subproblem for scenario {scenario} is infeasible at w = {w:?}")]
    SubproblemInfeasible { scenario: usize, w: Vec<f64> },
    #[error("subproblem for scenario {scenario} is unbounded")]
    SubproblemUnbounded { scenario: usize },
    #[error("gap {gap:.3e} not closed in {iterations} iterations")]
    MaxIterations { iterations: usize, gap: f64 },
    #[error(transparent)]
    Lp(#[from] crate::solvers::simplex::LpError),
}

/// Scenario recourse LP plus the rows coupled to the first stage: the dual
/// of row `coupling[i].0` is the cut coefficient of master variable
/// `w_indices[coupling[i].1]`.
#[derive(Debug, Clone)]
pub struct BendersSubproblem {
    pub lp: LinearProgram,
    pub coupling: Vec<(usize, usize)>,
}

/// Cutting plane `theta >= intercept + coeffs . w`.
#[derive(Debug, Clone)]
pub struct Cut {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BendersIterate {
    pub iter: usize,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BendersState {
    pub cuts: Vec<Cut>,
    pub lower: f64,
    pub upper: f64,
    pub history: Vec<BendersIterate>,
    pub iterations: usize,
}

impl BendersState {
    /// Iteration log in the `iter,lower,upper,gap,wall_ms` format.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,lower,upper,gap,wall_ms\n");
        for it in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                it.iter, it.lower, it.upper, it.gap, it.wall_ms
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BendersOutcome {
    /// Master solution at the best upper bound.
    pub first_stage: Vec<f64>,
    pub objective: f64,
    pub state: BendersState,
}

#[derive(Debug, Clone, Copy)]
pub struct BendersOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BendersOptions {
    fn default() -> Self {
        BendersOptions {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

/// Runs synchronous Benders. `master` must minimize the epigraph variable
/// `theta_index`; `w_indices` are the master variables the subproblems
/// couple to; `subproblem(w_hat, s)` builds the recourse LP of scenario `s`.
pub fn benders_solve(
    master: &LinearProgram,
    w_indices: &[usize],
    theta_index: usize,
    num_scenarios: usize,
    subproblem: impl Fn(&[f64], usize) -> BendersSubproblem,
    options: &BendersOptions,
) -> Result<BendersOutcome, BendersError> {
    let start = Instant::now();
    let mut cuts: Vec<Cut> = Vec::new();
    let mut history = Vec::new();
    let mut best_upper = f64::INFINITY;
    let mut best_first_stage = vec![0.0; master.num_vars];
    let mut lower = f64::NEG_INFINITY;

    for iter in 0..options.max_iter {
        // master with current cut set
        let mut lp = master.clone();
        for cut in &cuts {
            // theta - coeffs . w >= intercept
            let mut row = vec![(theta_index, 1.0)];
            for (k, &wi) in w_indices.iter().enumerate() {
                if cut.coeffs[k] != 0.0 {
                    row.push((wi, -cut.coeffs[k]));
                }
            }
            lp.add_row(row, Sense::Ge, cut.intercept);
        }
        let master_sol = simplex_solve(&lp)?;
        match master_sol.status {
            LpStatus::Infeasible => return Err(BendersError::MasterInfeasible),
            LpStatus::Unbounded => return Err(BendersError::MasterUnbounded),
            LpStatus::Optimal => {}
        }
        lower = master_sol.objective;
        let w_hat: Vec<f64> = w_indices.iter().map(|&i| master_sol.x[i]).collect();

        // scenario subproblems at w_hat
        let mut upper_iter = 0.0;
        let mut cut_intercept = 0.0;
        let mut cut_coeffs = vec![0.0; w_indices.len()];
        for s in 0..num_scenarios {
            let sub = subproblem(&w_hat, s);
            let sol = simplex_solve(&sub.lp)?;
            match sol.status {
                LpStatus::Infeasible => {
                    return Err(BendersError::SubproblemInfeasible {
                        scenario: s,
                        w: w_hat.clone(),
                    })
                }
                LpStatus::Unbounded => {
                    return Err(BendersError::SubproblemUnbounded { scenario: s })
                }
                LpStatus::Optimal => {}
            }
            upper_iter += sol.objective;
            // Q(w) >= Q(w_hat) + lambda . (w - w_hat), lambda = coupling duals
            let mut lam_dot_w_hat = 0.0;
            for &(row, wk) in &sub.coupling {
                let lam = sol.duals[row];
                cut_coeffs[wk] += lam;
                lam_dot_w_hat += lam * w_hat[wk];
            }
            cut_intercept += sol.objective - lam_dot_w_hat;
        }

        if upper_iter < best_upper {
            best_upper = upper_iter;
            best_first_stage = master_sol.x.clone();
        }
        let gap = best_upper - lower;
        history.push(BendersIterate {
            iter,
            lower,
            upper: best_upper,
            gap,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        if gap <= options.tol {
            return Ok(BendersOutcome {
                first_stage: best_first_stage,
                objective: best_upper,
                state: BendersState {
                    cuts,
                    lower,
                    upper: best_upper,
                    history,
                    iterations: iter + 1,
                },
            });
        }

        cuts.push(Cut {
            intercept: cut_intercept,
            coeffs: cut_coeffs,
        });
    }

    Err(BendersError::MaxIterations {
        iterations: options.max_iter,
        gap: best_upper - lower,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smallest resource instance: one base, one district, one scenario with
    /// demand d. Master vars: (z, w, theta); subproblem vars: (y, u, q).
    fn tiny_master(gamma: f64, budget: f64, h: f64) -> LinearProgram {
        let mut lp = LinearProgram::new(3);
        lp.objective = vec![0.0, 0.0, 1.0]; // min theta
        lp.add_row(vec![(0, h)], Sense::Le, budget);
        // w = gamma + z
        lp.add_row(vec![(1, 1.0), (0, -1.0)], Sense::Eq, gamma);
        lp
    }

    fn tiny_sub(w_hat: &[f64], demand: f64, p: f64) -> BendersSubproblem {
        // min p*u  s.t. q = w_hat - y; y + u >= d; y, u, q >= 0
        let mut lp = LinearProgram::new(3); // y, u, q
        lp.objective = vec![0.0, p, 0.0];
        let coupling_row = lp.add_row(vec![(2, 1.0), (0, 1.0)], Sense::Eq, w_hat[0]);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Ge, demand);
        BendersSubproblem {
            lp,
            coupling: vec![(coupling_row, 0)],
        }
    }

    #[test]
    fn one_base_one_district_converges_to_zero_unmet() {
        // gamma = 1, one scenario d = 1: all demand can be met
        let master = tiny_master(1.0, 10.0, 1.0);
        let out = benders_solve(
            &master,
            &[1],
            2,
            1,
            |w, _| tiny_sub(w, 1.0, 1.0),
            &BendersOptions::default(),
        )
        .unwrap();
        assert!(out.objective.abs() <= 1e-8);
        assert!(out.state.upper - out.state.lower <= 1e-8);
    }

    #[test]
    fn zero_budget_zero_resources_pays_full_demand() {
        // gamma = 0, budget 0: unmet demand = p * d
        let master = tiny_master(0.0, 0.0, 1.0);
        let out = benders_solve(
            &master,
            &[1],
            2,
            1,
            |w, _| tiny_sub(w, 3.0, 0.25),
            &BendersOptions::default(),
        )
        .unwrap();
        assert!((out.objective - 0.75).abs() <= 1e-8);
    }

    #[test]
    fn lower_bound_is_nondecreasing() {
        let master = tiny_master(0.5, 2.0, 1.0);
        let out = benders_solve(
            &master,
            &[1],
            2,
            3,
            |w, s| tiny_sub(w, 1.0 + s as f64, 0.5),
            &BendersOptions::default(),
        )
        .unwrap();
        let lowers: Vec<f64> = out.state.history.iter().map(|h| h.lower).collect();
        for pair in lowers.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9);
        }
        for h in &out.state.history {
            assert!(h.upper >= h.lower - 1e-9);
        }
    }
}
