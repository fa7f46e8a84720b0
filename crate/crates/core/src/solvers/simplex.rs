//! Two-phase dense tableau simplex with Bland's anti-cycling rule.
//!
//! Minimizes `c'x` subject to general rows (<=, ==, >=) and variable bounds.
//! Bounds are folded into the standard form by shifting, mirroring or
//! splitting variables; phase one drives artificial variables to zero and
//! phase two optimizes the original objective. Row duals are recovered from
//! the reduced costs of the slack/artificial columns.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("non-finite entry in LP data")]
    NonFiniteData,
    #[error("row references variable {index}, LP has {len} variables")]
    BadIndex { index: usize, len: usize },
    #[error("variable {0} has crossing bounds")]
    BadBounds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Minimized objective coefficients, dense.
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// LP with all variables bounded below by zero.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(LpRow { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row]
            .coeffs
            .iter()
            .map(|&(j, a)| a * x[j])
            .sum()
    }

    fn check(&self) -> Result<(), LpError> {
        for c in &self.objective {
            if !c.is_finite() {
                return Err(LpError::NonFiniteData);
            }
        }
        for (i, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l > u {
                return Err(LpError::BadBounds(i));
            }
            if l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::BadBounds(i));
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFiniteData);
            }
            for &(j, a) in &row.coeffs {
                if j >= self.num_vars {
                    return Err(LpError::BadIndex {
                        index: j,
                        len: self.num_vars,
                    });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFiniteData);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Per original row: sensitivity of the optimal objective to that row's rhs.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, nvars: usize, nrows: usize) -> Self {
        LpSolution {
            status,
            x: vec![0.0; nvars],
            duals: vec![0.0; nrows],
            reduced_costs: vec![0.0; nvars],
            objective: 0.0,
        }
    }
}

/// How an original variable maps into the standardized nonnegative variables.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = shift + x'
    Shifted { col: usize, shift: f64 },
    /// x = shift - x'
    Mirrored { col: usize, shift: f64 },
    /// x = x+ - x-
    Split { pos: usize, neg: usize },
}

struct Standardized {
    ncols: usize,
    cost: Vec<f64>,
    /// rows in standardized variables; all senses preserved, rhs adjusted
    rows: Vec<(Vec<f64>, Sense, f64)>,
    var_map: Vec<VarMap>,
    /// standardized row index -> original row index (bound rows map to None)
    row_origin: Vec<Option<usize>>,
    obj_offset: f64,
}

fn standardize(lp: &LinearProgram) -> Standardized {
    let mut var_map = Vec::with_capacity(lp.num_vars);
    let mut ncols = 0usize;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new(); // (col, upper residual) x' <= u
    for i in 0..lp.num_vars {
        let (l, u) = (lp.lower[i], lp.upper[i]);
        if l.is_finite() {
            let col = ncols;
            ncols += 1;
            var_map.push(VarMap::Shifted { col, shift: l });
            if u.is_finite() {
                extra_rows.push((col, u - l));
            }
        } else if u.is_finite() {
            let col = ncols;
            ncols += 1;
            var_map.push(VarMap::Mirrored { col, shift: u });
        } else {
            let pos = ncols;
            let neg = ncols + 1;
            ncols += 2;
            var_map.push(VarMap::Split { pos, neg });
        }
    }

    let mut cost = vec![0.0; ncols];
    let mut obj_offset = 0.0;
    for (i, &c) in lp.objective.iter().enumerate() {
        match var_map[i] {
            VarMap::Shifted { col, shift } => {
                cost[col] += c;
                obj_offset += c * shift;
            }
            VarMap::Mirrored { col, shift } => {
                cost[col] -= c;
                obj_offset += c * shift;
            }
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let mut rows = Vec::new();
    let mut row_origin = Vec::new();
    for (ri, row) in lp.rows.iter().enumerate() {
        let mut dense = vec![0.0; ncols];
        let mut rhs = row.rhs;
        for &(j, a) in &row.coeffs {
            match var_map[j] {
                VarMap::Shifted { col, shift } => {
                    dense[col] += a;
                    rhs -= a * shift;
                }
                VarMap::Mirrored { col, shift } => {
                    dense[col] -= a;
                    rhs -= a * shift;
                }
                VarMap::Split { pos, neg } => {
                    dense[pos] += a;
                    dense[neg] -= a;
                }
            }
        }
        rows.push((dense, row.sense, rhs));
        row_origin.push(Some(ri));
    }
    for (col, ub) in extra_rows {
        let mut dense = vec![0.0; ncols];
        dense[col] = 1.0;
        rows.push((dense, Sense::Le, ub));
        row_origin.push(None);
    }

    Standardized {
        ncols,
        cost,
        rows,
        var_map,
        row_origin,
        obj_offset,
    }
}

/// Solves the LP, returning status, primal and dual values.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let std_form = standardize(lp);
    let m = std_form.rows.len();
    let n_struct = std_form.ncols;

    // column layout: structural | slack/surplus | artificial | rhs
    let mut n_slack = 0usize;
    for (_, sense, _) in &std_form.rows {
        if *sense != Sense::Eq {
            n_slack += 1;
        }
    }
    let n_art = m; // one artificial per row keeps dual recovery uniform
    let ncols = n_struct + n_slack + n_art;
    let mut tab = vec![vec![0.0; ncols + 1]; m];
    let mut slack_col = vec![usize::MAX; m];
    let art_col: Vec<usize> = (0..m).map(|i| n_struct + n_slack + i).collect();
    // sign applied to each row so the tableau rhs is nonnegative
    let mut row_sign = vec![1.0; m];

    let mut next_slack = n_struct;
    for (i, (dense, sense, rhs)) in std_form.rows.iter().enumerate() {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        row_sign[i] = sign;
        for (j, &a) in dense.iter().enumerate() {
            tab[i][j] = sign * a;
        }
        match sense {
            Sense::Le => {
                slack_col[i] = next_slack;
                tab[i][next_slack] = sign;
                next_slack += 1;
            }
            Sense::Ge => {
                slack_col[i] = next_slack;
                tab[i][next_slack] = -sign;
                next_slack += 1;
            }
            Sense::Eq => {}
        }
        tab[i][art_col[i]] = 1.0;
        tab[i][ncols] = sign * rhs;
    }

    // initial basis: artificials
    let mut basis: Vec<usize> = art_col.clone();

    // Phase 1: minimize sum of artificials.
    let mut phase1_cost = vec![0.0; ncols];
    for &c in &art_col {
        phase1_cost[c] = 1.0;
    }
    let mut obj_row = reduced_cost_row(&tab, &basis, &phase1_cost, ncols);
    pivot_to_optimal(&mut tab, &mut basis, &mut obj_row, ncols, None);
    let phase1_value = -obj_row[ncols];
    if phase1_value > FEAS_TOL {
        return Ok(LpSolution::non_optimal(
            LpStatus::Infeasible,
            lp.num_vars,
            lp.rows.len(),
        ));
    }
    // Drive any basic artificial at zero level out of the basis when possible.
    for i in 0..m {
        if basis[i] >= n_struct + n_slack {
            if let Some(j) = (0..n_struct + n_slack).find(|&j| tab[i][j].abs() > PIVOT_TOL) {
                pivot(&mut tab, i, j, ncols);
                basis[i] = j;
            }
        }
    }

    // Phase 2: original costs, artificials barred from entering.
    let mut phase2_cost = vec![0.0; ncols];
    phase2_cost[..n_struct].copy_from_slice(&std_form.cost);
    let mut obj_row = reduced_cost_row(&tab, &basis, &phase2_cost, ncols);
    let bar_from = n_struct + n_slack;
    let unbounded = !pivot_to_optimal(&mut tab, &mut basis, &mut obj_row, ncols, Some(bar_from));
    if unbounded {
        return Ok(LpSolution::non_optimal(
            LpStatus::Unbounded,
            lp.num_vars,
            lp.rows.len(),
        ));
    }

    // Recover standardized primal values.
    let mut xs = vec![0.0; ncols];
    for (i, &b) in basis.iter().enumerate() {
        xs[b] = tab[i][ncols];
    }
    let mut x = vec![0.0; lp.num_vars];
    for (i, map) in std_form.var_map.iter().enumerate() {
        x[i] = match *map {
            VarMap::Shifted { col, shift } => shift + xs[col],
            VarMap::Mirrored { col, shift } => shift - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        };
    }

    // Row duals out of the artificial columns: rc_art = 0 - y_i (cost 0), so
    // y_i = -rc_art_i in the scaled system; unscale by the row sign.
    let mut duals = vec![0.0; lp.rows.len()];
    for i in 0..m {
        if let Some(orig) = std_form.row_origin[i] {
            duals[orig] = -obj_row[art_col[i]] * row_sign[i];
        }
    }
    let mut reduced_costs = vec![0.0; lp.num_vars];
    for (i, map) in std_form.var_map.iter().enumerate() {
        reduced_costs[i] = match *map {
            VarMap::Shifted { col, .. } => obj_row[col],
            VarMap::Mirrored { col, .. } => -obj_row[col],
            VarMap::Split { pos, .. } => obj_row[pos],
        };
    }

    let objective = std_form.obj_offset
        + std_form
            .cost
            .iter()
            .zip(&xs)
            .map(|(c, v)| c * v)
            .sum::<f64>();

    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        duals,
        reduced_costs,
        objective,
    })
}

fn reduced_cost_row(tab: &[Vec<f64>], basis: &[usize], cost: &[f64], ncols: usize) -> Vec<f64> {
    // obj_row[j] = c_j - c_B B^-1 a_j ; obj_row[ncols] = -c_B x_B
    let mut row = vec![0.0; ncols + 1];
    row[..ncols].copy_from_slice(cost);
    for (i, &b) in basis.iter().enumerate() {
        let cb = cost[b];
        if cb != 0.0 {
            for j in 0..=ncols {
                row[j] -= cb * tab[i][j];
            }
        }
    }
    row
}

fn pivot(tab: &mut [Vec<f64>], row: usize, col: usize, ncols: usize) {
    let p = tab[row][col];
    for j in 0..=ncols {
        tab[row][j] /= p;
    }
    for i in 0..tab.len() {
        if i != row {
            let f = tab[i][col];
            if f != 0.0 {
                for j in 0..=ncols {
                    tab[i][j] -= f * tab[row][j];
                }
            }
        }
    }
}

/// Pivots until optimal under Bland's rule. Returns false on unboundedness.
/// Columns at or past `bar_from` may not enter the basis.
fn pivot_to_optimal(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    obj_row: &mut Vec<f64>,
    ncols: usize,
    bar_from: Option<usize>,
) -> bool {
    let limit = bar_from.unwrap_or(ncols);
    loop {
        // Bland: entering = lowest-index column with negative reduced cost
        let entering = (0..limit).find(|&j| obj_row[j] < -PIVOT_TOL);
        let Some(col) = entering else {
            return true;
        };
        // leaving = lowest ratio; ties by lowest basis variable index
        let mut best: Option<(f64, usize, usize)> = None; // (ratio, basis var, row)
        for i in 0..tab.len() {
            let a = tab[i][col];
            if a > PIVOT_TOL {
                let ratio = tab[i][ncols] / a;
                let candidate = (ratio, basis[i], i);
                let better = match best {
                    None => true,
                    Some((r, bv, _)) => {
                        ratio < r - PIVOT_TOL || (ratio < r + PIVOT_TOL && basis[i] < bv)
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
        let Some((_, _, row)) = best else {
            return false; // unbounded direction
        };
        pivot(tab, row, col, ncols);
        basis[row] = col;
        // keep the explicit objective row in sync
        let f = obj_row[col];
        if f != 0.0 {
            for j in 0..=ncols {
                obj_row[j] -= f * tab[row][j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_x_plus_y_on_unit_simplex() {
        // max x+y s.t. x+y <= 1, x,y >= 0  ==  min -(x+y)
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.0);
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-9);
        assert!((sol.x[0] + sol.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // min x s.t. x >= 1, x <= 0
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.add_row(vec![(0, 1.0)], Sense::Ge, 1.0);
        lp.add_row(vec![(0, 1.0)], Sense::Le, 0.0);
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -x, x >= 0, no rows
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_free_variables() {
        // min |ish| free var: min y s.t. y == x - 2, x <= 3, x free, y free
        let mut lp = LinearProgram::new(2);
        lp.lower = vec![f64::NEG_INFINITY, f64::NEG_INFINITY];
        lp.objective = vec![0.0, 1.0];
        lp.add_row(vec![(1, 1.0), (0, -1.0)], Sense::Eq, -2.0);
        lp.add_row(vec![(0, 1.0)], Sense::Le, 3.0);
        // unbounded below? y = x-2, x unbounded below -> yes
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn duals_reflect_rhs_sensitivity() {
        // min 2x + 3y s.t. x + y >= 4, x - y == 1, x, y >= 0
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![2.0, 3.0];
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 4.0);
        lp.add_row(vec![(0, 1.0), (1, -1.0)], Sense::Eq, 1.0);
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // optimum at x=2.5, y=1.5: obj = 9.5
        assert!((sol.objective - 9.5).abs() < 1e-9);
        // finite-difference check of both duals
        for (ri, dual) in sol.duals.iter().enumerate() {
            let h = 1e-5;
            let mut lp2 = lp.clone();
            lp2.rows[ri].rhs += h;
            let up = simplex_solve(&lp2).unwrap();
            let fd = (up.objective - sol.objective) / h;
            assert!(
                (fd - dual).abs() < 1e-4,
                "row {ri}: dual={dual} fd={fd}"
            );
        }
    }

    #[test]
    fn bounded_variable_shifts() {
        // min x s.t. x in [2, 5]
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.lower = vec![2.0];
        lp.upper = vec![5.0];
        let sol = simplex_solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        // max side
        lp.objective = vec![-1.0];
        let sol = simplex_solve(&lp).unwrap();
        assert!((sol.x[0] - 5.0).abs() < 1e-9);
    }
}
