//! Reactor-separator plant: two reactors in series with A -> B -> C
//! chemistry and a separator with recycle. Twelve states (heights, weight
//! fractions and temperatures per unit), nine manipulated inputs. The right
//! hand side is generic over the AD scalar so the same code yields the
//! nonlinear simulation and the linearization used by the MPC controllers.

use graphkit_core::expr::{Dual, Scalar};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NX: usize = 12;
pub const NU: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("state became non-finite during integration")]
    StateBlowup,
    #[error("interval end {t1} precedes start {t0}")]
    BadInterval { t0: f64, t1: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactorParams {
    pub area: [f64; 3],
    pub rho: f64,
    pub cp: f64,
    pub x_a0: f64,
    pub t_feed: f64,
    pub k_a: f64,
    pub k_b: f64,
    pub ea_over_r: f64,
    pub eb_over_r: f64,
    pub dh_a: f64,
    pub dh_b: f64,
    pub alpha: [f64; 3],
}

impl Default for ReactorParams {
    fn default() -> Self {
        ReactorParams {
            area: [1.0, 1.0, 0.5],
            rho: 1000.0,
            cp: 4.2,
            x_a0: 0.98,
            t_feed: 359.1,
            k_a: 2769.44,
            k_b: 2500.0,
            ea_over_r: 6013.95,
            eb_over_r: 7216.74,
            dh_a: -167.4,
            dh_b: -139.5,
            alpha: [5.0, 1.0, 0.5],
        }
    }
}

/// State order: [H1, xA1, xB1, T1, H2, xA2, xB2, T2, H3, xA3, xB3, T3].
pub fn setpoint_state() -> [f64; NX] {
    [
        16.1475, 0.6291, 0.3593, 387.594, 12.3137, 0.6102, 0.3760, 386.993, 15.0, 0.2928, 0.67,
        387.01,
    ]
}

/// Input order: [Ff1, Q1, F1, Ff2, Q2, F2, FR, Q3, F3], grouped by the unit
/// whose controller manipulates them.
pub fn setpoint_input() -> [f64; NU] {
    [6.3778, 26.0601, 63.1766, 6.8126, 5.0382, 69.9892, 56.7989, 5.0347, 12.6224]
}

pub fn initial_state() -> [f64; NX] {
    [
        25.4702, 0.1428, 0.7045, 415.944, 5.4703, 0.3653, 0.5307, 399.303, 15.0, 0.1565, 0.67,
        399.364,
    ]
}

pub fn initial_input() -> [f64; NU] {
    [1.1866, 29.0597, 12.8828, 7.0263, 5.1067, 19.9091, 11.6962, 5.09834, 8.0960]
}

/// Time derivative of the plant state.
pub fn plant_rhs<T: Scalar>(x: &[T], u: &[T], p: &ReactorParams) -> Vec<T> {
    let c = T::from_f64;
    let (h1, xa1, xb1, t1) = (x[0].clone(), x[1].clone(), x[2].clone(), x[3].clone());
    let (h2, xa2, xb2, t2) = (x[4].clone(), x[5].clone(), x[6].clone(), x[7].clone());
    let (h3, xa3, xb3, t3) = (x[8].clone(), x[9].clone(), x[10].clone(), x[11].clone());
    let (ff1, q1, f1) = (u[0].clone(), u[1].clone(), u[2].clone());
    let (ff2, q2, f2) = (u[3].clone(), u[4].clone(), u[5].clone());
    let (fr, q3, f3) = (u[6].clone(), u[7].clone(), u[8].clone());

    let ka1 = c(p.k_a) * (-c(p.ea_over_r) / t1.clone()).exp();
    let kb1 = c(p.k_b) * (-c(p.eb_over_r) / t1.clone()).exp();
    let ka2 = c(p.k_a) * (-c(p.ea_over_r) / t2.clone()).exp();
    let kb2 = c(p.k_b) * (-c(p.eb_over_r) / t2.clone()).exp();

    // recycle composition from the separator split factors
    let xc3 = c(1.0) - xa3.clone() - xb3.clone();
    let xbar3 = c(p.alpha[0]) * xa3.clone() + c(p.alpha[1]) * xb3.clone() + c(p.alpha[2]) * xc3;
    let xar = c(p.alpha[0]) * xa3.clone() / xbar3.clone();
    let xbr = c(p.alpha[1]) * xb3.clone() / xbar3;
    let fd = c(0.01) * fr.clone();
    let tr = t3.clone();

    let ra1 = c(p.rho) * c(p.area[0]);
    let ra2 = c(p.rho) * c(p.area[1]);
    let ra3 = c(p.rho) * c(p.area[2]);
    let v1 = ra1.clone() * h1.clone();
    let v2 = ra2.clone() * h2.clone();
    let v3 = ra3.clone() * h3.clone();

    let dh1 = (ff1.clone() + fr.clone() - f1.clone()) / ra1;
    let dxa1 = (ff1.clone() * c(p.x_a0) + fr.clone() * xar.clone() - f1.clone() * xa1.clone())
        / v1.clone()
        - ka1.clone() * xa1.clone();
    let dxb1 = (fr.clone() * xbr.clone() - f1.clone() * xb1.clone()) / v1.clone()
        + ka1.clone() * xa1.clone()
        - kb1.clone() * xb1.clone();
    let dt1 = (ff1.clone() * c(p.t_feed) + fr.clone() * tr.clone() - f1.clone() * t1.clone())
        / v1.clone()
        - (ka1 * xa1 * c(p.dh_a) + kb1 * xb1 * c(p.dh_b)) / c(p.cp)
        + q1 / (v1 * c(p.cp));

    let dh2 = (ff2.clone() + f1.clone() - f2.clone()) / ra2;
    let dxa2 = (ff2.clone() * c(p.x_a0) + f1.clone() * x[1].clone() - f2.clone() * xa2.clone())
        / v2.clone()
        - ka2.clone() * xa2.clone();
    let dxb2 = (f1.clone() * x[2].clone() - f2.clone() * xb2.clone()) / v2.clone()
        + ka2.clone() * xa2.clone()
        - kb2.clone() * xb2.clone();
    let dt2 = (ff2 * c(p.t_feed) + f1 * x[3].clone() - f2.clone() * t2.clone()) / v2.clone()
        - (ka2 * xa2 * c(p.dh_a) + kb2 * xb2 * c(p.dh_b)) / c(p.cp)
        + q2 / (v2 * c(p.cp));

    let f_rec = fd.clone() + fr.clone();
    let dh3 = (f2.clone() - fd - fr - f3.clone()) / ra3;
    let dxa3 = (f2.clone() * x[5].clone() - f_rec.clone() * xar - f3.clone() * xa3) / v3.clone();
    let dxb3 = (f2.clone() * x[6].clone() - f_rec.clone() * xbr - f3.clone() * xb3) / v3.clone();
    let dt3 = (f2 * x[7].clone() - f_rec * tr - f3 * t3) / v3.clone() + q3 / (v3 * c(p.cp));

    vec![dh1, dxa1, dxb1, dt1, dh2, dxa2, dxb2, dt2, dh3, dxa3, dxb3, dt3]
}

const HEIGHT_FLOOR: f64 = 1e-6;

/// RK4 with a fixed substep of at most `substep` seconds; heights are
/// clipped at a small positive floor.
pub fn simulate_plant_with_substep(
    params: &ReactorParams,
    state: &[f64; NX],
    inputs: &[f64; NU],
    t0: f64,
    t1: f64,
    substep: f64,
) -> Result<[f64; NX], PlantError> {
    if t1 < t0 {
        return Err(PlantError::BadInterval { t0, t1 });
    }
    if t1 == t0 {
        return Ok(*state);
    }
    let span = t1 - t0;
    let n_steps = (span / substep).ceil().max(1.0) as usize;
    let h = span / n_steps as f64;
    let u: Vec<f64> = inputs.to_vec();
    let mut x: Vec<f64> = state.to_vec();
    for _ in 0..n_steps {
        let k1 = plant_rhs(&x, &u, params);
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = plant_rhs(&x2, &u, params);
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = plant_rhs(&x3, &u, params);
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        let k4 = plant_rhs(&x4, &u, params);
        for i in 0..NX {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for hi in [0, 4, 8] {
            if x[hi] < HEIGHT_FLOOR {
                x[hi] = HEIGHT_FLOOR;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::StateBlowup);
        }
    }
    let mut out = [0.0; NX];
    out.copy_from_slice(&x);
    Ok(out)
}

pub fn simulate_plant(
    params: &ReactorParams,
    state: &[f64; NX],
    inputs: &[f64; NU],
    t0: f64,
    t1: f64,
) -> Result<[f64; NX], PlantError> {
    simulate_plant_with_substep(params, state, inputs, t0, t1, 1.0)
}

/// Jacobians (A, B) of the right hand side at (`x0`, `u0`), row-major.
pub fn linearize(
    params: &ReactorParams,
    x0: &[f64; NX],
    u0: &[f64; NU],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut a = vec![vec![0.0; NX]; NX];
    let mut b = vec![vec![0.0; NU]; NX];
    for j in 0..NX {
        let x: Vec<Dual<f64>> = x0
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::new(v, if i == j { 1.0 } else { 0.0 }))
            .collect();
        let u: Vec<Dual<f64>> = u0.iter().map(|&v| Dual::new(v, 0.0)).collect();
        let dx = plant_rhs(&x, &u, params);
        for i in 0..NX {
            a[i][j] = dx[i].dx;
        }
    }
    for j in 0..NU {
        let x: Vec<Dual<f64>> = x0.iter().map(|&v| Dual::new(v, 0.0)).collect();
        let u: Vec<Dual<f64>> = u0
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::new(v, if i == j { 1.0 } else { 0.0 }))
            .collect();
        let dx = plant_rhs(&x, &u, params);
        for i in 0..NX {
            b[i][j] = dx[i].dx;
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setpoint_is_nearly_steady() {
        let p = ReactorParams::default();
        let dx = plant_rhs(&setpoint_state().to_vec(), &setpoint_input().to_vec(), &p);
        for (i, v) in dx.iter().enumerate() {
            assert!(v.abs() <= 1e-2, "component {i} drifts at {v}");
        }
    }

    #[test]
    fn zero_length_interval_is_identity() {
        let p = ReactorParams::default();
        let x = initial_state();
        let out = simulate_plant(&p, &x, &initial_input(), 10.0, 10.0).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn step_halving_agrees() {
        let p = ReactorParams::default();
        let x = initial_state();
        let u = initial_input();
        let coarse = simulate_plant_with_substep(&p, &x, &u, 0.0, 60.0, 1.0).unwrap();
        let fine = simulate_plant_with_substep(&p, &x, &u, 0.0, 60.0, 0.5).unwrap();
        for i in 0..NX {
            let rel = (coarse[i] - fine[i]).abs() / fine[i].abs().max(1.0);
            assert!(rel <= 1e-6, "state {i}: coarse {} fine {}", coarse[i], fine[i]);
        }
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let p = ReactorParams::default();
        let x0 = setpoint_state();
        let u0 = setpoint_input();
        let (a, b) = linearize(&p, &x0, &u0);
        let h = 1e-6;
        for j in 0..NX {
            let mut xp = x0;
            xp[j] += h * (1.0 + x0[j].abs());
            let mut xm = x0;
            xm[j] -= h * (1.0 + x0[j].abs());
            let up = plant_rhs(&xp.to_vec(), &u0.to_vec(), &p);
            let dn = plant_rhs(&xm.to_vec(), &u0.to_vec(), &p);
            for i in 0..NX {
                let fd = (up[i] - dn[i]) / (xp[j] - xm[j]);
                assert!(
                    (a[i][j] - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                    "A[{i}][{j}]: ad {} fd {fd}",
                    a[i][j]
                );
            }
        }
        for j in 0..NU {
            let mut upv = u0;
            upv[j] += h * (1.0 + u0[j].abs());
            let mut dnv = u0;
            dnv[j] -= h * (1.0 + u0[j].abs());
            let up = plant_rhs(&x0.to_vec(), &upv.to_vec(), &p);
            let dn = plant_rhs(&x0.to_vec(), &dnv.to_vec(), &p);
            for i in 0..NX {
                let fd = (up[i] - dn[i]) / (upv[j] - dnv[j]);
                assert!(
                    (b[i][j] - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                    "B[{i}][{j}]: ad {} fd {fd}",
                    b[i][j]
                );
            }
        }
    }
}
