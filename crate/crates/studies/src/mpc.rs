//! Model predictive control of the reactor-separator plant under three
//! computing architectures: one centralized controller, three decentralized
//! unit controllers, and three cooperative controllers that exchange planned
//! input trajectories for a fixed number of coordination iterations.
//!
//! Controllers are equality-constrained QPs on the plant dynamics linearized
//! once at the setpoint, solved through the block KKT path. Unit controllers
//! predict with the full linear model but optimize only their own inputs;
//! the other inputs are data, fixed to the setpoint (decentralized) or to
//! the trajectories received from the other controllers (cooperative).

use crate::reactor::{
    initial_input, initial_state, linearize, setpoint_input, setpoint_state, simulate_plant,
    ReactorParams, NU, NX,
};
use graphkit_core::expr::Expr;
use graphkit_core::modelgraph::{FlattenedProblem, ModelGraph, ModelGraphError};
use graphkit_core::model::ComponentModel;
use graphkit_core::solvers::kkt::{newton_kkt, KktError, KktOptions, SolveMethod};
use graphkit_sim::{
    AttrValue, BusyPolicy, ComputeTime, ComputingGraph, EngineError, NodeId as SimNodeId, SendOn,
    Status, TraceDocument, Trigger,
};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("spec error: {0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] ModelGraphError),
    #[error(transparent)]
    Model(#[from] graphkit_core::model::ModelError),
    #[error(transparent)]
    Kkt(#[from] KktError),
    #[error(transparent)]
    Build(#[from] graphkit_sim::BuildError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpcArchitecture {
    Centralized,
    Decentralized,
    Cooperative,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MpcTiming {
    pub measurement_delay: f64,
    pub sample_period: f64,
    pub first_sample: f64,
    pub injection_delay: f64,
    /// Fixed simulated duration of one controller solve.
    pub control_time: f64,
    pub exchange_delay: f64,
    /// Largest plant integration hop between queue events.
    pub plant_max_hop: f64,
}

impl Default for MpcTiming {
    fn default() -> Self {
        MpcTiming {
            measurement_delay: 30.0,
            sample_period: 60.0,
            first_sample: 5.0,
            injection_delay: 30.0,
            control_time: 1.0,
            exchange_delay: 0.0,
            plant_max_hop: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcSpec {
    pub params: ReactorParams,
    /// Prediction horizon in steps.
    pub horizon: usize,
    /// Discretization step of the controller model, seconds.
    pub step: f64,
    /// Output tracking weights per unit controller.
    pub q_weights: [[f64; 4]; 3],
    /// Input move weights (shared across the three inputs of each unit).
    pub r_weight: f64,
    pub iter_max: usize,
    pub timing: MpcTiming,
}

impl Default for MpcSpec {
    fn default() -> Self {
        MpcSpec {
            params: ReactorParams::default(),
            horizon: 20,
            step: 30.0,
            q_weights: [
                [100.0, 10.0, 100.0, 0.1],
                [10.0, 10.0, 100.0, 0.1],
                [1.0, 10.0, 1e5, 0.1],
            ],
            r_weight: 100.0,
            iter_max: 3,
            timing: MpcTiming::default(),
        }
    }
}

/// Which inputs a controller owns and which states it models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerScope {
    /// All nine inputs, all twelve states: the centralized controller.
    Full,
    /// One unit's three inputs and its four local states; interactions with
    /// the rest of the plant are not modeled.
    Unit(usize),
    /// One unit's three inputs predicting over all twelve states; the other
    /// controllers' inputs enter as data. Used by the coordination
    /// iterations of cooperative MPC.
    CoordinatedUnit(usize),
}

impl ControllerScope {
    fn owned_inputs(&self) -> Vec<usize> {
        match self {
            ControllerScope::Full => (0..NU).collect(),
            ControllerScope::Unit(u) | ControllerScope::CoordinatedUnit(u) => {
                (3 * u..3 * u + 3).collect()
            }
        }
    }

    fn modeled_states(&self) -> Vec<usize> {
        match self {
            ControllerScope::Full | ControllerScope::CoordinatedUnit(_) => (0..NX).collect(),
            ControllerScope::Unit(u) => (4 * u..4 * u + 4).collect(),
        }
    }

    fn weighted_states(&self, spec: &MpcSpec) -> Vec<(usize, f64)> {
        match self {
            ControllerScope::Full => (0..3)
                .flat_map(|u| (0..4).map(move |k| (4 * u + k, spec.q_weights[u][k])))
                .collect(),
            ControllerScope::Unit(u) | ControllerScope::CoordinatedUnit(u) => {
                (0..4).map(|k| (4 * u + k, spec.q_weights[*u][k])).collect()
            }
        }
    }
}

/// One MPC controller: a parametric equality-constrained QP over state and
/// input deviations from the setpoint. Measured state and the other
/// controllers' input plans enter through the data vector, so repeated
/// solves reuse the model structure.
pub struct Controller {
    graph: ModelGraph,
    node: graphkit_core::NodeId,
    scope: ControllerScope,
    horizon: usize,
    states: Vec<usize>,
    foreign: Vec<usize>,
    own: Vec<usize>,
    others: Vec<usize>,
}

impl Controller {
    pub fn new(spec: &MpcSpec, scope: ControllerScope) -> Result<Self, MpcError> {
        let n = spec.horizon;
        let dt = spec.step;
        let (a, b) = linearize(&spec.params, &setpoint_state(), &setpoint_input());
        let own = scope.owned_inputs();
        let others: Vec<usize> = (0..NU).filter(|k| !own.contains(k)).collect();
        let states = scope.modeled_states();

        let foreign: Vec<usize> = (0..NX).filter(|i| !states.contains(i)).collect();

        let mut m = ComponentModel::new();
        // state deviations x_0 .. x_N over the modeled states
        for t in 0..=n {
            for &i in &states {
                m.add_variable(&format!("x_{t}_{i}"), 0.0)?;
            }
        }
        // own input deviations u_0 .. u_{N-1}
        for t in 0..n {
            for &k in &own {
                m.add_variable(&format!("u_{t}_{k}"), 0.0)?;
            }
        }
        // data: measured modeled states, unmodeled-state deviations (held
        // constant over the horizon), and the other controllers' plans
        for &i in &states {
            m.add_data(&format!("y0_{i}"), 0.0)?;
        }
        for &i in &foreign {
            m.add_data(&format!("nst_{i}"), 0.0)?;
        }
        for &k in &others {
            for t in 0..n {
                m.add_data(&format!("oth_{k}_{t}"), 0.0)?;
            }
        }

        let x = |m: &ComponentModel, t: usize, i: usize| {
            m.var_expr(&format!("x_{t}_{i}")).expect("declared")
        };
        // initial condition rows
        for (si, &i) in states.iter().enumerate() {
            m.add_equality(x(&m, 0, i) - Expr::data(si))?;
        }
        // forward Euler dynamics over the modeled states; couplings into
        // unmodeled states come in as constant data offsets, zero unless the
        // controller is given coordination information
        for t in 0..n {
            for &i in &states {
                let mut terms: Vec<Expr> = Vec::new();
                for &j in &states {
                    if a[i][j] != 0.0 {
                        terms.push(x(&m, t, j) * a[i][j]);
                    }
                }
                for (fi, &j) in foreign.iter().enumerate() {
                    if a[i][j] != 0.0 {
                        terms.push(Expr::data(states.len() + fi) * a[i][j]);
                    }
                }
                for k in 0..NU {
                    if b[i][k] == 0.0 {
                        continue;
                    }
                    let uk = if own.contains(&k) {
                        m.var_expr(&format!("u_{t}_{k}"))?
                    } else {
                        let data_idx = states.len()
                            + foreign.len()
                            + others.iter().position(|&o| o == k).unwrap() * n
                            + t;
                        Expr::data(data_idx)
                    };
                    terms.push(uk * b[i][k]);
                }
                let rhs = Expr::sum(terms);
                m.add_equality(x(&m, t + 1, i) - x(&m, t, i) - rhs * dt)?;
            }
        }
        // tracking cost on the scoped outputs plus own input effort
        let mut obj_terms: Vec<Expr> = Vec::new();
        for t in 1..=n {
            for &(i, w) in &scope.weighted_states(spec) {
                if w != 0.0 {
                    obj_terms.push(x(&m, t, i).square() * w);
                }
            }
        }
        for t in 0..n {
            for &k in &own {
                obj_terms.push(m.var_expr(&format!("u_{t}_{k}"))?.square() * spec.r_weight);
            }
        }
        m.set_objective(Expr::sum(obj_terms))?;

        let mut graph = ModelGraph::new();
        let node = graph.add_node();
        graph.set_model(node, m)?;
        Ok(Controller {
            graph,
            node,
            scope,
            horizon: n,
            states,
            foreign,
            own,
            others,
        })
    }

    /// Solves for the measured state (absolute units, full state vector; the
    /// controller reads the states it models). With `coordinated` the
    /// unmodeled-state offsets are taken from the measurement and the other
    /// controllers' planned deviations (`others_plan[o][t]`, ascending
    /// unowned-input order) are honored; otherwise both stay at the setpoint.
    /// Returns the absolute first input and the deviation plan for the owned
    /// inputs.
    pub fn solve(
        &mut self,
        measured: &[f64; NX],
        coordinated: bool,
        others_plan: &[Vec<f64>],
    ) -> Result<ControlPlan, MpcError> {
        let xsp = setpoint_state();
        let usp = setpoint_input();
        for &i in &self.states {
            self.graph
                .set_data(self.node, &format!("y0_{i}"), measured[i] - xsp[i])?;
        }
        for &i in &self.foreign {
            let dev = if coordinated { measured[i] - xsp[i] } else { 0.0 };
            self.graph.set_data(self.node, &format!("nst_{i}"), dev)?;
        }
        for (oi, &k) in self.others.iter().enumerate() {
            for t in 0..self.horizon {
                let v = if coordinated {
                    others_plan
                        .get(oi)
                        .and_then(|p| p.get(t))
                        .copied()
                        .unwrap_or(0.0)
                } else {
                    0.0
                };
                self.graph.set_data(self.node, &format!("oth_{k}_{t}"), v)?;
            }
        }
        let flat = self.graph.aggregate()?;
        let sol = newton_kkt(
            &flat,
            KktOptions {
                tol: 1e-8,
                max_iter: 10,
                method: SolveMethod::Schur,
            },
        )?;
        let lookup = |flat: &FlattenedProblem, name: &str| {
            flat.names
                .iter()
                .position(|n| n.ends_with(&format!(".{name}")))
                .expect("declared variable")
        };
        let mut inject = Vec::with_capacity(self.own.len());
        let mut plan = vec![vec![0.0; self.horizon]; self.own.len()];
        for (oi, &k) in self.own.iter().enumerate() {
            for t in 0..self.horizon {
                plan[oi][t] = sol.x[lookup(&flat, &format!("u_{t}_{k}"))];
            }
            inject.push(usp[k] + plan[oi][0]);
        }
        Ok(ControlPlan { inject, plan })
    }

    pub fn scope(&self) -> ControllerScope {
        self.scope
    }
}

#[derive(Debug, Clone)]
pub struct ControlPlan {
    /// Absolute first-step inputs for the owned channels.
    pub inject: Vec<f64>,
    /// Deviation trajectories, one row per owned input.
    pub plan: Vec<Vec<f64>>,
}

/// Weighted tracking error `sqrt((x - x_sp)' Q (x - x_sp))` with the full
/// block-diagonal output weights.
pub fn tracking_error(spec: &MpcSpec, state: &[f64]) -> f64 {
    let xsp = setpoint_state();
    let mut acc = 0.0;
    for u in 0..3 {
        for k in 0..4 {
            let i = 4 * u + k;
            let d = state[i] - xsp[i];
            acc += spec.q_weights[u][k] * d * d;
        }
    }
    acc.sqrt()
}

fn clamp_flows(u: &mut [f64; NU]) {
    // flow channels cannot go negative at the actuators
    for k in [0usize, 2, 3, 5, 6, 8] {
        if u[k] < 0.0 {
            u[k] = 0.0;
        }
    }
}

/// Builds the plant + controller computing graph for one architecture.
pub fn build_mpc_computegraph(
    spec: &MpcSpec,
    architecture: MpcArchitecture,
) -> Result<ComputingGraph, MpcError> {
    if spec.horizon == 0 || spec.iter_max == 0 {
        return Err(MpcError::Spec("horizon and iter_max must be positive".into()));
    }
    let mut g = ComputingGraph::new();
    let timing = spec.timing;

    // plant node: integrates between queue events, inputs held constant
    let plant = g.add_node("plant");
    g.add_attribute(plant, "x", AttrValue::Vector(initial_state().to_vec()))?;
    let u0 = initial_input();
    g.add_attribute(plant, "u1", AttrValue::Vector(u0[0..3].to_vec()))?;
    g.add_attribute(plant, "u2", AttrValue::Vector(u0[3..6].to_vec()))?;
    g.add_attribute(plant, "u3", AttrValue::Vector(u0[6..9].to_vec()))?;
    let params = spec.params.clone();
    let max_hop = timing.plant_max_hop;
    let run_plant = g.add_task(
        plant,
        "run_plant",
        vec![Trigger::Updated(vec!["x".into()])],
        ComputeTime::FromCallback,
        BusyPolicy::default(),
        Box::new(move |ctx| {
            let now = ctx.time();
            let next = ctx.next_signal_time().unwrap_or(now);
            let target = next.max(now).min(now + max_hop);
            let mut state = [0.0; NX];
            state.copy_from_slice(&ctx.get_vector("x"));
            let mut u = [0.0; NU];
            u[0..3].copy_from_slice(&ctx.get_vector("u1"));
            u[3..6].copy_from_slice(&ctx.get_vector("u2"));
            u[6..9].copy_from_slice(&ctx.get_vector("u3"));
            clamp_flows(&mut u);
            let new_state = simulate_plant(&params, &state, &u, now, target)
                .map_err(|e| e.to_string())?;
            ctx.update("x", new_state.to_vec());
            ctx.set_compute_time(target - now);
            Ok(())
        }),
    )?;
    g.schedule_trigger(run_plant, 0.0)?;

    match architecture {
        MpcArchitecture::Centralized => {
            let node = g.add_node("mpc");
            g.add_attribute(node, "y", AttrValue::Vector(initial_state().to_vec()))?;
            for k in 1..=3 {
                g.add_attribute(node, &format!("u_inject{k}"), AttrValue::Vector(vec![0.0; 3]))?;
            }
            let controller = Rc::new(RefCell::new(Controller::new(spec, ControllerScope::Full)?));
            g.add_task(
                node,
                "control_action",
                vec![Trigger::Received(vec!["y".into()])],
                ComputeTime::Fixed(timing.control_time),
                BusyPolicy::default(),
                Box::new(move |ctx| {
                    let mut y = [0.0; NX];
                    y.copy_from_slice(&ctx.get_vector("y"));
                    let plan = controller
                        .borrow_mut()
                        .solve(&y, true, &[])
                        .map_err(|e| e.to_string())?;
                    ctx.update("u_inject1", plan.inject[0..3].to_vec());
                    ctx.update("u_inject2", plan.inject[3..6].to_vec());
                    ctx.update("u_inject3", plan.inject[6..9].to_vec());
                    Ok(())
                }),
            )?;
            g.connect(
                (plant, "x"),
                &[(node, "y")],
                timing.measurement_delay,
                SendOn::Sent,
                Some(timing.sample_period),
                Some(timing.first_sample),
            )?;
            for k in 1..=3 {
                let inject = format!("u_inject{k}");
                let dest = format!("u{k}");
                g.connect(
                    (node, inject.as_str()),
                    &[(plant, dest.as_str())],
                    timing.injection_delay,
                    SendOn::Updated,
                    None,
                    None,
                )?;
            }
        }
        MpcArchitecture::Decentralized | MpcArchitecture::Cooperative => {
            let cooperative = architecture == MpcArchitecture::Cooperative;
            let iter_max = if cooperative { spec.iter_max } else { 1 };
            let mut nodes: Vec<SimNodeId> = Vec::with_capacity(3);
            for unit in 0..3 {
                let node = g.add_node(&format!("mpc{}", unit + 1));
                g.add_attribute(node, "y", AttrValue::Vector(initial_state().to_vec()))?;
                g.add_attribute(node, "u_inject", AttrValue::Vector(vec![0.0; 3]))?;
                for j in 0..3 {
                    g.add_attribute(
                        node,
                        &format!("u_p{}", j + 1),
                        AttrValue::matrix(3, spec.horizon, vec![0.0; 3 * spec.horizon]),
                    )?;
                }
                g.add_attribute(node, "iter", AttrValue::Int(0))?;
                g.add_attribute(node, "flag", AttrValue::Int(0))?;
                g.add_attribute(node, "last_flag", AttrValue::Real(-1.0))?;
                nodes.push(node);
            }
            for unit in 0..3 {
                let node = nodes[unit];
                let local = Controller::new(spec, ControllerScope::Unit(unit))?;
                let coordinated_ctrl = if cooperative {
                    Some(Controller::new(spec, ControllerScope::CoordinatedUnit(unit))?)
                } else {
                    None
                };
                let controllers = Rc::new(RefCell::new((local, coordinated_ctrl)));
                let horizon = spec.horizon;
                let triggers = if cooperative {
                    vec![
                        Trigger::Received(vec!["y".into()]),
                        Trigger::Updated(vec!["flag".into()]),
                    ]
                } else {
                    vec![Trigger::Received(vec!["y".into()])]
                };
                g.add_task(
                    node,
                    &format!("control_action_{}", unit + 1),
                    triggers,
                    ComputeTime::Fixed(timing.control_time),
                    BusyPolicy::default(),
                    Box::new(move |ctx| {
                        let mut y = [0.0; NX];
                        y.copy_from_slice(&ctx.get_vector("y"));
                        // the first iteration of every sample is the plain
                        // local solve; later iterations use the exchanged
                        // plans and the coordination state offsets
                        let iter = ctx.get_int("iter");
                        let coordinated = cooperative && iter > 0;
                        let mut others: Vec<Vec<f64>> = Vec::with_capacity(6);
                        for j in 0..3 {
                            if j == unit {
                                continue;
                            }
                            let key = format!("u_p{}", j + 1);
                            let plan = match ctx.get(&key) {
                                Some(AttrValue::Matrix { data, cols, .. }) if coordinated => {
                                    let mut rows = Vec::with_capacity(3);
                                    for r in 0..3 {
                                        rows.push(data[r * cols..(r + 1) * cols].to_vec());
                                    }
                                    rows
                                }
                                _ => vec![vec![0.0; horizon]; 3],
                            };
                            others.extend(plan);
                        }
                        let mut pair = controllers.borrow_mut();
                        let plan = if coordinated {
                            pair.1
                                .as_mut()
                                .expect("cooperative controller")
                                .solve(&y, true, &others)
                        } else {
                            pair.0.solve(&y, false, &others)
                        }
                        .map_err(|e| e.to_string())?;
                        let it = iter + 1;
                        if it >= iter_max as i64 {
                            ctx.update("u_inject", plan.inject.clone());
                            ctx.update("iter", 0i64);
                        } else {
                            let mut data = Vec::with_capacity(3 * horizon);
                            for row in &plan.plan {
                                data.extend_from_slice(row);
                            }
                            ctx.update(
                                &format!("u_p{}", unit + 1),
                                AttrValue::matrix(3, horizon, data),
                            );
                            ctx.update("iter", it);
                        }
                        Ok(())
                    }),
                )?;
                if cooperative {
                    let other_keys: Vec<String> = (0..3)
                        .filter(|j| *j != unit)
                        .map(|j| format!("u_p{}", j + 1))
                        .collect();
                    let keys = other_keys.clone();
                    g.add_task(
                        node,
                        &format!("receive_policy_{}", unit + 1),
                        vec![Trigger::Received(other_keys)],
                        ComputeTime::Fixed(0.0),
                        BusyPolicy::default(),
                        Box::new(move |ctx| {
                            let last_flag = ctx.get_real("last_flag");
                            let both_fresh = keys.iter().all(|k| {
                                ctx.attribute(k)
                                    .map(|a| a.last_received > last_flag)
                                    .unwrap_or(false)
                            });
                            if both_fresh {
                                ctx.update("flag", ctx.get_int("flag") + 1);
                                ctx.update("last_flag", ctx.time());
                            }
                            Ok(())
                        }),
                    )?;
                }
            }
            // one measurement edge fanning out to all controllers
            g.connect(
                (plant, "x"),
                &[(nodes[0], "y"), (nodes[1], "y"), (nodes[2], "y")],
                timing.measurement_delay,
                SendOn::Sent,
                Some(timing.sample_period),
                Some(timing.first_sample),
            )?;
            for unit in 0..3 {
                let dest = format!("u{}", unit + 1);
                g.connect(
                    (nodes[unit], "u_inject"),
                    &[(plant, dest.as_str())],
                    timing.injection_delay,
                    SendOn::Updated,
                    None,
                    None,
                )?;
            }
            if cooperative {
                for unit in 0..3 {
                    let key = format!("u_p{}", unit + 1);
                    let dests: Vec<(SimNodeId, &str)> = (0..3)
                        .filter(|j| *j != unit)
                        .map(|j| (nodes[j], key.as_str()))
                        .collect();
                    g.connect(
                        (nodes[unit], key.as_str()),
                        &dests,
                        timing.exchange_delay,
                        SendOn::Updated,
                        None,
                        None,
                    )?;
                }
            }
        }
    }
    Ok(g)
}

#[derive(Debug)]
pub struct MpcReport {
    pub architecture: MpcArchitecture,
    pub status: Status,
    pub initial_error: f64,
    pub terminal_error: f64,
    /// Weighted tracking error at every plant commit.
    pub error_series: Vec<(f64, f64)>,
    /// Plant state at every commit.
    pub state_series: Vec<(f64, Vec<f64>)>,
    pub trace: TraceDocument,
}

/// Runs one architecture over `horizon` simulated seconds.
pub fn run_mpc(
    spec: &MpcSpec,
    architecture: MpcArchitecture,
    horizon: f64,
) -> Result<MpcReport, MpcError> {
    let mut g = build_mpc_computegraph(spec, architecture)?;
    let status = g.execute_bounded(Some(horizon), Some(50_000_000))?;
    let plant = g.node_id("plant").expect("plant node");
    let mut state_series: Vec<(f64, Vec<f64>)> = vec![(0.0, initial_state().to_vec())];
    for (t, v) in g.state_series(plant, "x") {
        if let AttrValue::Vector(x) = v {
            state_series.push((t, x));
        }
    }
    let error_series: Vec<(f64, f64)> = state_series
        .iter()
        .map(|(t, x)| (*t, tracking_error(spec, x)))
        .collect();
    let initial_error = error_series.first().map(|e| e.1).unwrap_or(f64::NAN);
    let terminal_error = error_series.last().map(|e| e.1).unwrap_or(f64::NAN);
    Ok(MpcReport {
        architecture,
        status,
        initial_error,
        terminal_error,
        error_series,
        state_series,
        trace: g.export_trace(Some(horizon)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_at_setpoint_returns_setpoint_inputs() {
        let spec = MpcSpec::default();
        let mut c = Controller::new(&spec, ControllerScope::Full).unwrap();
        let plan = c.solve(&setpoint_state(), true, &[]).unwrap();
        for (k, v) in plan.inject.iter().enumerate() {
            assert!(
                (v - setpoint_input()[k]).abs() < 1e-6,
                "input {k}: {v} vs {}",
                setpoint_input()[k]
            );
        }
    }

    #[test]
    fn centralized_qp_solves_in_one_iteration() {
        let spec = MpcSpec::default();
        let mut c = Controller::new(&spec, ControllerScope::Full).unwrap();
        let mut y = setpoint_state();
        y[0] += 2.0;
        y[3] -= 5.0;
        // one Newton iteration must reach the KKT tolerance on a QP
        let xsp = setpoint_state();
        for i in 0..NX {
            c.graph.set_data(c.node, &format!("y0_{i}"), y[i] - xsp[i]).unwrap();
        }
        let flat = c.graph.aggregate().unwrap();
        let sol = newton_kkt(&flat, KktOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.residual <= 1e-8);
    }

    #[test]
    fn unit_controller_moves_toward_setpoint() {
        let spec = MpcSpec::default();
        let mut c = Controller::new(&spec, ControllerScope::Unit(0)).unwrap();
        let mut y = setpoint_state();
        y[0] += 3.0; // raise H1; the controller should cut the feed or raise F1
        let zeros = vec![vec![0.0; spec.horizon]; 6];
        let plan = c.solve(&y, false, &zeros).unwrap();
        assert_eq!(plan.inject.len(), 3);
        assert_eq!(plan.plan.len(), 3);
        // some corrective action is taken
        assert!(plan.plan.iter().any(|row| row[0].abs() > 1e-9));
    }

    #[test]
    fn measurement_schedule_follows_timing() {
        let spec = MpcSpec::default();
        let mut g = build_mpc_computegraph(&spec, MpcArchitecture::Decentralized).unwrap();
        g.execute_bounded(Some(200.0), Some(200_000)).unwrap();
        let sends: Vec<f64> = g
            .trace()
            .iter()
            .filter(|e| e.signal.name() == "communicate" && e.entity.name.contains("plant.x"))
            .map(|e| e.t)
            .collect();
        assert_eq!(sends, vec![5.0, 65.0, 125.0, 185.0]);
    }
}
