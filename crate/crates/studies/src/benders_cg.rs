//! Synchronous Benders simulated as a computing graph: a master node running
//! the cut-augmented first stage, worker nodes solving scenario recourse
//! problems, and communication edges with architecture-dependent delays.
//! Scenarios are dispatched dynamically; a worker that returns a solution
//! receives the next unsolved scenario while the round is still open.

use crate::resource::ResourceAllocationSpec;
use graphkit_core::solvers::simplex::{simplex_solve, LpStatus, Sense};
use graphkit_sim::{
    AttrValue, BusyPolicy, ComputeTime, ComputingGraph, EngineError, SendOn, Status, TraceDocument,
    Trigger,
};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BendersCgError {
    #[error("spec error: {0}")]
    Spec(String),
    #[error(transparent)]
    Resource(#[from] crate::resource::ResourceError),
    #[error(transparent)]
    Build(#[from] graphkit_sim::BuildError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Simulated compute duration of a task on the virtual architecture.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum TimePolicy {
    Fixed(f64),
    Walltime,
}

impl TimePolicy {
    fn to_compute_time(self) -> ComputeTime {
        match self {
            TimePolicy::Fixed(d) => ComputeTime::Fixed(d),
            TimePolicy::Walltime => ComputeTime::Walltime,
        }
    }
}

/// A hypothetical parallel machine: one master CPU plus `workers` worker
/// CPUs, every master-worker message delayed by `delay` seconds. With a
/// single worker and `colocate_single_worker` set, the worker shares the
/// master's CPU and communication is free.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VirtualArchitecture {
    pub workers: usize,
    pub delay: f64,
    pub master_time: TimePolicy,
    pub sub_time: TimePolicy,
    pub colocate_single_worker: bool,
}

impl Default for VirtualArchitecture {
    fn default() -> Self {
        VirtualArchitecture {
            workers: 4,
            delay: 0.005,
            master_time: TimePolicy::Walltime,
            sub_time: TimePolicy::Walltime,
            colocate_single_worker: true,
        }
    }
}

impl VirtualArchitecture {
    pub fn effective_delay(&self) -> f64 {
        if self.workers == 1 && self.colocate_single_worker {
            0.0
        } else {
            self.delay
        }
    }
}

/// Final bounds as observed by the master node, shared with the driver.
#[derive(Debug, Clone, Default)]
pub struct BendersCgProgress {
    pub lower: f64,
    pub upper: f64,
    pub rounds: usize,
    pub converged: bool,
}

#[derive(Debug)]
pub struct BendersCgReport {
    pub objective: f64,
    pub lower: f64,
    pub rounds: usize,
    pub makespan: f64,
    pub status: Status,
    pub trace: TraceDocument,
}

/// Wires the computing graph for `spec` on `arch`. Returns the graph and the
/// progress cell the master updates.
pub fn build_benders_computegraph(
    spec: &ResourceAllocationSpec,
    arch: &VirtualArchitecture,
    tol: f64,
) -> Result<(ComputingGraph, Rc<RefCell<BendersCgProgress>>), BendersCgError> {
    spec.validate()?;
    if arch.workers == 0 {
        return Err(BendersCgError::Spec("need at least one worker".into()));
    }
    let n_workers = arch.workers;
    let n_scenarios = spec.scenarios.len();
    let nb = spec.num_bases();
    let delay = arch.effective_delay();
    let progress = Rc::new(RefCell::new(BendersCgProgress {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        rounds: 0,
        converged: false,
    }));

    let mut g = ComputingGraph::new();
    let master = g.add_node("master");
    g.add_attribute(master, "x", AttrValue::Vector(vec![0.0; nb]))?;
    g.add_attribute(master, "flag", AttrValue::Int(0))?;
    g.add_attribute(master, "ub", AttrValue::Real(f64::INFINITY))?;
    g.add_attribute(master, "lb", AttrValue::Real(f64::NEG_INFINITY))?;
    g.add_attribute(master, "done", AttrValue::Int(0))?;
    g.add_attribute(master, "next", AttrValue::Int(0))?;
    g.add_attribute(master, "acc_q", AttrValue::Real(0.0))?;
    g.add_attribute(master, "acc_coeffs", AttrValue::Vector(vec![0.0; nb]))?;
    g.add_attribute(master, "acc_icept", AttrValue::Real(0.0))?;
    g.add_attribute(master, "cuts", AttrValue::matrix(0, 1 + nb, vec![]))?;
    for i in 0..n_workers {
        g.add_attribute(master, &format!("xi_{i}"), AttrValue::Int(-1))?;
        g.add_attribute(
            master,
            &format!("s_{i}"),
            AttrValue::Record(BTreeMap::new()),
        )?;
    }

    // run_master: solve the cut-augmented master, check the gap, dispatch a
    // fresh batch of scenarios
    let spec_m = spec.clone();
    let progress_m = Rc::clone(&progress);
    let first_batch = n_workers.min(n_scenarios);
    let run_master = g.add_task(
        master,
        "run_master",
        vec![Trigger::Updated(vec!["flag".into()])],
        arch.master_time.to_compute_time(),
        BusyPolicy::default(),
        Box::new(move |ctx| {
            let (mut lp, w_indices, _theta) = spec_m.master_lp();
            if let Some(AttrValue::Matrix { rows, cols, data }) = ctx.get("cuts") {
                for r in 0..*rows {
                    let row = &data[r * cols..(r + 1) * cols];
                    let mut coeffs = vec![(lp.num_vars - 1, 1.0)];
                    for (k, &wi) in w_indices.iter().enumerate() {
                        if row[1 + k] != 0.0 {
                            coeffs.push((wi, -row[1 + k]));
                        }
                    }
                    lp.add_row(coeffs, Sense::Ge, row[0]);
                }
            }
            let sol = simplex_solve(&lp).map_err(|e| e.to_string())?;
            if sol.status != LpStatus::Optimal {
                return Err(format!("master status {:?}", sol.status));
            }
            let lower = sol.objective;
            let upper = ctx.get_real("ub");
            {
                let mut p = progress_m.borrow_mut();
                p.lower = lower;
                p.upper = upper;
                p.rounds += 1;
            }
            if upper - lower <= tol {
                progress_m.borrow_mut().converged = true;
                ctx.stop();
                return Ok(());
            }
            let w_hat: Vec<f64> = w_indices.iter().map(|&i| sol.x[i]).collect();
            ctx.update("lb", lower);
            ctx.update("x", w_hat);
            for i in 0..first_batch {
                ctx.update(&format!("xi_{i}"), i as i64);
            }
            ctx.update("next", first_batch as i64);
            ctx.update("done", 0i64);
            ctx.update("acc_q", 0.0);
            ctx.update("acc_coeffs", vec![0.0; spec_m.num_bases()]);
            ctx.update("acc_icept", 0.0);
            Ok(())
        }),
    )?;

    // receive_solution_i: fold the worker's answer into the round
    // accumulators, then either hand it the next scenario or close the round
    for i in 0..n_workers {
        let spec_r = spec.clone();
        g.add_task(
            master,
            &format!("receive_solution_{i}"),
            vec![Trigger::Received(vec![format!("s_{i}")])],
            ComputeTime::Fixed(0.0),
            BusyPolicy::default(),
            Box::new(move |ctx| {
                let s = ctx
                    .get(&format!("s_{i}"))
                    .and_then(|v| v.as_record().cloned())
                    .ok_or("missing solution record")?;
                let q = s.get("q").and_then(|v| v.as_real()).ok_or("missing q")?;
                let duals = s
                    .get("duals")
                    .and_then(|v| v.as_vector().map(<[f64]>::to_vec))
                    .ok_or("missing duals")?;
                let w_hat = ctx.get_vector("x");
                let nb = spec_r.num_bases();

                let acc_q = ctx.get_real("acc_q") + q;
                let mut coeffs = ctx.get_vector("acc_coeffs");
                let mut icept = ctx.get_real("acc_icept") + q;
                for j in 0..nb {
                    coeffs[j] += duals[j];
                    icept -= duals[j] * w_hat[j];
                }
                let done = ctx.get_int("done") + 1;
                let next = ctx.get_int("next");
                ctx.update("acc_q", acc_q);
                ctx.update("acc_coeffs", coeffs.clone());
                ctx.update("acc_icept", icept);
                ctx.update("done", done);

                let n_sc = spec_r.scenarios.len() as i64;
                if done == n_sc {
                    let prev_ub = ctx.get_real("ub");
                    ctx.update("ub", prev_ub.min(acc_q));
                    if let Some(AttrValue::Matrix { rows, cols, data }) = ctx.get("cuts") {
                        let mut data = data.clone();
                        data.push(icept);
                        data.extend_from_slice(&coeffs);
                        ctx.update("cuts", AttrValue::matrix(rows + 1, *cols, data));
                    }
                    ctx.update("flag", ctx.get_int("flag") + 1);
                } else if next < n_sc {
                    ctx.update(&format!("xi_{i}"), next);
                    ctx.update("next", next + 1);
                }
                Ok(())
            }),
        )?;
    }

    // workers: solve the received scenario against the received first stage
    let mut worker_nodes = Vec::with_capacity(n_workers);
    for i in 0..n_workers {
        let w = g.add_node(&format!("sub{i}"));
        g.add_attribute(w, "x", AttrValue::Vector(vec![0.0; nb]))?;
        g.add_attribute(w, "xi", AttrValue::Int(-1))?;
        g.add_attribute(w, "s", AttrValue::Record(BTreeMap::new()))?;
        let spec_w = spec.clone();
        g.add_task(
            w,
            "solve_subproblem",
            vec![Trigger::Received(vec!["xi".into()])],
            arch.sub_time.to_compute_time(),
            BusyPolicy::default(),
            Box::new(move |ctx| {
                let scenario = ctx.get_int("xi");
                if scenario < 0 {
                    return Err("no scenario assigned".into());
                }
                let w_hat = ctx.get_vector("x");
                let sub = spec_w.subproblem(&w_hat, scenario as usize);
                let sol = simplex_solve(&sub.lp).map_err(|e| e.to_string())?;
                if sol.status != LpStatus::Optimal {
                    return Err(format!("subproblem status {:?}", sol.status));
                }
                let mut duals = vec![0.0; spec_w.num_bases()];
                for &(row, wk) in &sub.coupling {
                    duals[wk] = sol.duals[row];
                }
                let mut record = BTreeMap::new();
                record.insert("q".to_string(), AttrValue::Real(sol.objective));
                record.insert("duals".to_string(), AttrValue::Vector(duals));
                record.insert("scenario".to_string(), AttrValue::Int(scenario));
                ctx.update("s", AttrValue::Record(record));
                Ok(())
            }),
        )?;
        worker_nodes.push(w);
    }

    for (i, &w) in worker_nodes.iter().enumerate() {
        g.connect((master, "x"), &[(w, "x")], delay, SendOn::Updated, None, None)?;
        g.connect(
            (master, &format!("xi_{i}")),
            &[(w, "xi")],
            delay,
            SendOn::Updated,
            None,
            None,
        )?;
        g.connect(
            (w, "s"),
            &[(master, &format!("s_{i}"))],
            delay,
            SendOn::Updated,
            None,
            None,
        )?;
    }

    g.schedule_trigger(run_master, 0.0)?;
    Ok((g, progress))
}

/// Builds and runs the simulation, returning the converged objective, the
/// simulated makespan and the full trace.
pub fn run_benders_computegraph(
    spec: &ResourceAllocationSpec,
    arch: &VirtualArchitecture,
    tol: f64,
    horizon: Option<f64>,
) -> Result<BendersCgReport, BendersCgError> {
    let (mut g, progress) = build_benders_computegraph(spec, arch, tol)?;
    let status = g.execute_bounded(horizon, Some(10_000_000))?;
    let p = progress.borrow();
    Ok(BendersCgReport {
        objective: p.upper,
        lower: p.lower,
        rounds: p.rounds,
        makespan: g.clock,
        status,
        trace: g.export_trace(horizon),
    })
}

/// The simulated makespan of `rounds` full Benders rounds under fixed task
/// times, accumulated in the same order the engine schedules them: master
/// compute, then per wave the scenario delay out, the subproblem solve and
/// the solution delay back.
pub fn hand_schedule_makespan(
    tau_master: f64,
    tau_sub: f64,
    delay: f64,
    scenarios: usize,
    workers: usize,
    rounds: usize,
) -> f64 {
    let mut t = 0.0;
    let waves = scenarios.div_ceil(workers);
    for _ in 0..rounds {
        t += tau_master;
        for _ in 0..waves {
            t += delay;
            t += tau_sub;
            t += delay;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resource::Scenario;
    use graphkit_core::decomp::BendersOptions;

    fn small_spec(scenarios: usize) -> ResourceAllocationSpec {
        ResourceAllocationSpec {
            initial: vec![1.5, 0.5],
            purchase_cost: vec![1.0, 2.0],
            base_arcs: vec![(0, 1, 0.2)],
            district_arcs: vec![(0, 0), (1, 1), (1, 0)],
            budget: 1.0,
            scenarios: (0..scenarios)
                .map(|s| Scenario {
                    probabilities: vec![0.5, 0.8],
                    demands: vec![0.5 + 0.25 * s as f64, 1.0 + 0.125 * s as f64],
                })
                .collect(),
        }
    }

    /// Every demand zero: recourse is identically zero, so the scheme
    /// converges after exactly one full round of subproblems.
    fn zero_demand_spec(scenarios: usize) -> ResourceAllocationSpec {
        ResourceAllocationSpec {
            initial: vec![1.0],
            purchase_cost: vec![1.0],
            base_arcs: vec![],
            district_arcs: vec![(0, 0)],
            budget: 1.0,
            scenarios: (0..scenarios)
                .map(|_| Scenario {
                    probabilities: vec![1.0],
                    demands: vec![0.0],
                })
                .collect(),
        }
    }

    fn fixed_arch(workers: usize, tau_m: f64, tau_s: f64, delay: f64) -> VirtualArchitecture {
        VirtualArchitecture {
            workers,
            delay,
            master_time: TimePolicy::Fixed(tau_m),
            sub_time: TimePolicy::Fixed(tau_s),
            colocate_single_worker: true,
        }
    }

    #[test]
    fn matches_numeric_driver_objective() {
        let spec = small_spec(4);
        let numeric = spec.solve_benders(&BendersOptions::default()).unwrap();
        let report = run_benders_computegraph(
            &spec,
            &fixed_arch(2, 0.001, 0.002, 0.005),
            1e-8,
            None,
        )
        .unwrap();
        assert_eq!(report.status, Status::Stopped);
        assert!(
            (report.objective - numeric.objective).abs() <= 1e-6,
            "cg {} vs numeric {}",
            report.objective,
            numeric.objective
        );
    }

    #[test]
    fn makespan_matches_hand_schedule() {
        let (tau_m, tau_s, delta) = (0.001, 0.002, 0.005);
        for (workers, scenarios) in [(1usize, 6usize), (4, 6), (8, 6)] {
            let spec = zero_demand_spec(scenarios);
            let arch = fixed_arch(workers, tau_m, tau_s, delta);
            let report = run_benders_computegraph(&spec, &arch, 1e-8, None).unwrap();
            assert_eq!(report.rounds, 2, "one working round plus the closing check");
            let expected = hand_schedule_makespan(
                tau_m,
                tau_s,
                arch.effective_delay(),
                scenarios,
                workers,
                1,
            );
            assert_eq!(
                report.makespan, expected,
                "workers={workers}: engine {} vs hand {}",
                report.makespan, expected
            );
        }
    }

    #[test]
    fn single_cpu_beats_four_but_loses_to_sixteen() {
        let (tau_m, tau_s) = (0.001, 0.002);
        let spec = zero_demand_spec(16);
        let mut makespans = BTreeMap::new();
        for workers in [1usize, 4, 8, 16] {
            let arch = fixed_arch(workers, tau_m, tau_s, 0.005);
            let report = run_benders_computegraph(&spec, &arch, 1e-8, None).unwrap();
            makespans.insert(workers, report.makespan);
        }
        assert!(makespans[&1] < makespans[&4], "{makespans:?}");
        assert!(makespans[&8] < makespans[&1], "{makespans:?}");
        assert!(makespans[&16] < makespans[&8], "{makespans:?}");
    }
}
