//! Two-stage stochastic resource allocation: bases holding resources,
//! districts with uncertain demands, first-stage transfers and purchases,
//! second-stage dispatch. Builds the master/subproblem pair for Benders and
//! the extensive-form LP used as its oracle.

use graphkit_core::decomp::{benders_solve, BendersError, BendersOptions, BendersOutcome, BendersSubproblem};
use graphkit_core::solvers::simplex::{simplex_solve, LinearProgram, LpStatus, Sense};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("spec needs at least one base and one district")]
    Empty,
    #[error("arc endpoint out of range")]
    BadArc,
    #[error("scenario {0} has wrong demand/probability length")]
    BadScenario(usize),
    #[error("extensive form did not solve: {0:?}")]
    ExtensiveFailed(LpStatus),
    #[error(transparent)]
    Benders(#[from] BendersError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    /// Realization probability per district.
    pub probabilities: Vec<f64>,
    /// Resource demand per district.
    pub demands: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceAllocationSpec {
    /// Initial resources per base.
    pub initial: Vec<f64>,
    /// Purchase cost per base.
    pub purchase_cost: Vec<f64>,
    /// Transfer arcs between bases: (from, to, cost).
    pub base_arcs: Vec<(usize, usize, f64)>,
    /// Dispatch arcs from base to district.
    pub district_arcs: Vec<(usize, usize)>,
    pub budget: f64,
    pub scenarios: Vec<Scenario>,
}

impl ResourceAllocationSpec {
    pub fn num_bases(&self) -> usize {
        self.initial.len()
    }

    pub fn num_districts(&self) -> usize {
        self.scenarios
            .first()
            .map(|s| s.demands.len())
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ResourceError> {
        let nb = self.num_bases();
        let nf = self.num_districts();
        if nb == 0 || nf == 0 || self.scenarios.is_empty() {
            return Err(ResourceError::Empty);
        }
        if self.purchase_cost.len() != nb {
            return Err(ResourceError::Empty);
        }
        for &(a, b, _) in &self.base_arcs {
            if a >= nb || b >= nb {
                return Err(ResourceError::BadArc);
            }
        }
        for &(b, f) in &self.district_arcs {
            if b >= nb || f >= nf {
                return Err(ResourceError::BadArc);
            }
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            if s.demands.len() != nf || s.probabilities.len() != nf {
                return Err(ResourceError::BadScenario(i));
            }
        }
        Ok(())
    }

    /// Master LP over (x, z, w, theta): minimize theta subject to the budget
    /// and resource-balance rows. Cuts are appended by the Benders driver.
    /// Returns (lp, w_indices, theta_index).
    pub fn master_lp(&self) -> (LinearProgram, Vec<usize>, usize) {
        let nb = self.num_bases();
        let na = self.base_arcs.len();
        // layout: x (na) | z (nb) | w (nb) | theta
        let num_vars = na + 2 * nb + 1;
        let mut lp = LinearProgram::new(num_vars);
        let theta = na + 2 * nb;
        lp.objective[theta] = 1.0;
        // budget: sum c_a x_a + sum h_j z_j <= Budget
        let mut budget_row = Vec::new();
        for (a, &(_, _, cost)) in self.base_arcs.iter().enumerate() {
            budget_row.push((a, cost));
        }
        for j in 0..nb {
            budget_row.push((na + j, self.purchase_cost[j]));
        }
        lp.add_row(budget_row, Sense::Le, self.budget);
        // w_j - z_j - sum(in arcs) + sum(out arcs) = gamma_j
        for j in 0..nb {
            let mut row = vec![(na + nb + j, 1.0), (na + j, -1.0)];
            for (a, &(from, to, _)) in self.base_arcs.iter().enumerate() {
                if to == j {
                    row.push((a, -1.0));
                }
                if from == j {
                    row.push((a, 1.0));
                }
            }
            lp.add_row(row, Sense::Eq, self.initial[j]);
        }
        let w_indices: Vec<usize> = (0..nb).map(|j| na + nb + j).collect();
        (lp, w_indices, theta)
    }

    /// Recourse LP of one scenario at fixed first-stage resources `w_hat`:
    /// dispatch along district arcs to cover demand, paying probability-
    /// weighted unmet demand.
    pub fn subproblem(&self, w_hat: &[f64], scenario: usize) -> BendersSubproblem {
        let nb = self.num_bases();
        let nf = self.num_districts();
        let nd = self.district_arcs.len();
        let sc = &self.scenarios[scenario];
        // layout: y (nd) | u (nf) | q (nb)
        let mut lp = LinearProgram::new(nd + nf + nb);
        for f in 0..nf {
            lp.objective[nd + f] = sc.probabilities[f];
        }
        // coupling rows first: q_j + sum(y out of j) = w_hat_j
        let mut coupling = Vec::with_capacity(nb);
        for j in 0..nb {
            let mut row = vec![(nd + nf + j, 1.0)];
            for (a, &(from, _)) in self.district_arcs.iter().enumerate() {
                if from == j {
                    row.push((a, 1.0));
                }
            }
            let idx = lp.add_row(row, Sense::Eq, w_hat[j]);
            coupling.push((idx, j));
        }
        // demand rows: sum(y into f) + u_f >= d_f
        for f in 0..nf {
            let mut row = vec![(nd + f, 1.0)];
            for (a, &(_, to)) in self.district_arcs.iter().enumerate() {
                if to == f {
                    row.push((a, 1.0));
                }
            }
            lp.add_row(row, Sense::Ge, sc.demands[f]);
        }
        BendersSubproblem { lp, coupling }
    }

    /// The undecomposed problem over all scenarios at once.
    pub fn extensive_form(&self) -> LinearProgram {
        let nb = self.num_bases();
        let nf = self.num_districts();
        let na = self.base_arcs.len();
        let nd = self.district_arcs.len();
        let ns = self.scenarios.len();
        // layout: x (na) | z (nb) | w (nb) | per scenario: y (nd) | u (nf) | q (nb)
        let per_sc = nd + nf + nb;
        let mut lp = LinearProgram::new(na + 2 * nb + ns * per_sc);
        let sc_base = |s: usize| na + 2 * nb + s * per_sc;
        for (s, sc) in self.scenarios.iter().enumerate() {
            for f in 0..nf {
                lp.objective[sc_base(s) + nd + f] = sc.probabilities[f];
            }
        }
        let mut budget_row = Vec::new();
        for (a, &(_, _, cost)) in self.base_arcs.iter().enumerate() {
            budget_row.push((a, cost));
        }
        for j in 0..nb {
            budget_row.push((na + j, self.purchase_cost[j]));
        }
        lp.add_row(budget_row, Sense::Le, self.budget);
        for j in 0..nb {
            let mut row = vec![(na + nb + j, 1.0), (na + j, -1.0)];
            for (a, &(from, to, _)) in self.base_arcs.iter().enumerate() {
                if to == j {
                    row.push((a, -1.0));
                }
                if from == j {
                    row.push((a, 1.0));
                }
            }
            lp.add_row(row, Sense::Eq, self.initial[j]);
        }
        for s in 0..ns {
            let base = sc_base(s);
            for j in 0..nb {
                // q_j + sum(y out of j) - w_j = 0
                let mut row = vec![(base + nd + nf + j, 1.0), (na + nb + j, -1.0)];
                for (a, &(from, _)) in self.district_arcs.iter().enumerate() {
                    if from == j {
                        row.push((base + a, 1.0));
                    }
                }
                lp.add_row(row, Sense::Eq, 0.0);
            }
            for f in 0..nf {
                let mut row = vec![(base + nd + f, 1.0)];
                for (a, &(_, to)) in self.district_arcs.iter().enumerate() {
                    if to == f {
                        row.push((base + a, 1.0));
                    }
                }
                lp.add_row(row, Sense::Ge, self.scenarios[s].demands[f]);
            }
        }
        lp
    }

    /// Optimal expected unmet demand by the extensive-form simplex solve.
    pub fn solve_extensive(&self) -> Result<f64, ResourceError> {
        let lp = self.extensive_form();
        let sol = simplex_solve(&lp).map_err(BendersError::from)?;
        if sol.status != LpStatus::Optimal {
            return Err(ResourceError::ExtensiveFailed(sol.status));
        }
        Ok(sol.objective)
    }

    /// Runs the numeric Benders driver on this instance.
    pub fn solve_benders(&self, options: &BendersOptions) -> Result<BendersOutcome, ResourceError> {
        self.validate()?;
        let (master, w_indices, theta) = self.master_lp();
        let outcome = benders_solve(
            &master,
            &w_indices,
            theta,
            self.scenarios.len(),
            |w_hat, s| self.subproblem(w_hat, s),
            options,
        )?;
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_base_instance() -> ResourceAllocationSpec {
        ResourceAllocationSpec {
            initial: vec![2.0, 0.5],
            purchase_cost: vec![1.0, 1.5],
            base_arcs: vec![(0, 1, 0.1)],
            district_arcs: vec![(0, 0), (1, 1), (0, 1)],
            budget: 1.0,
            scenarios: vec![
                Scenario {
                    probabilities: vec![0.6, 0.6],
                    demands: vec![1.0, 2.0],
                },
                Scenario {
                    probabilities: vec![0.4, 0.4],
                    demands: vec![2.5, 0.5],
                },
            ],
        }
    }

    #[test]
    fn benders_matches_extensive_form() {
        let spec = two_base_instance();
        let oracle = spec.solve_extensive().unwrap();
        let out = spec.solve_benders(&BendersOptions::default()).unwrap();
        assert!(
            (out.objective - oracle).abs() <= 1e-6,
            "benders {} vs extensive {}",
            out.objective,
            oracle
        );
    }

    #[test]
    fn no_resources_pays_all_probability_weighted_demand() {
        let spec = ResourceAllocationSpec {
            initial: vec![0.0],
            purchase_cost: vec![1.0],
            base_arcs: vec![],
            district_arcs: vec![(0, 0)],
            budget: 0.0,
            scenarios: vec![Scenario {
                probabilities: vec![0.5],
                demands: vec![3.0],
            }],
        };
        let out = spec.solve_benders(&BendersOptions::default()).unwrap();
        assert!((out.objective - 1.5).abs() <= 1e-8);
    }
}
