//! Closed-loop behavior of the three MPC architectures.

use graphkit_studies::mpc::{run_mpc, MpcArchitecture, MpcSpec};

/// With a single coordination iteration and no exchange delay, cooperative
/// controllers commit before any information is exchanged, so the closed
/// loop must reproduce the decentralized trajectories.
#[test]
fn cooperative_single_iteration_reduces_to_decentralized() {
    let mut spec = MpcSpec::default();
    spec.iter_max = 1;
    spec.timing.exchange_delay = 0.0;
    let horizon = 1000.0;
    let dec = run_mpc(&spec, MpcArchitecture::Decentralized, horizon).unwrap();
    let coop = run_mpc(&spec, MpcArchitecture::Cooperative, horizon).unwrap();
    assert_eq!(dec.state_series.len(), coop.state_series.len());
    for ((td, xd), (tc, xc)) in dec.state_series.iter().zip(&coop.state_series) {
        assert_eq!(td, tc);
        for (a, b) in xd.iter().zip(xc) {
            assert!((a - b).abs() <= 1e-9, "t={td}: {a} vs {b}");
        }
    }
}

/// Short-horizon sanity run of all three architectures: measurement receipts
/// precede every injection at the same controller, heights stay positive,
/// and the error is already shrinking.
#[test]
fn architectures_run_and_obey_causality() {
    let spec = MpcSpec::default();
    for arch in [
        MpcArchitecture::Centralized,
        MpcArchitecture::Decentralized,
        MpcArchitecture::Cooperative,
    ] {
        let report = run_mpc(&spec, arch, 800.0).unwrap();
        assert!(report.terminal_error < report.initial_error, "{arch:?}");
        for (_, x) in &report.state_series {
            for hi in [0, 4, 8] {
                assert!(x[hi] > 0.0 && x[hi].is_finite());
            }
        }
        // causality: an injection commit on a controller node implies an
        // earlier measurement receipt at that node
        let events = &report.trace.events;
        for (i, e) in events.iter().enumerate() {
            let injecting = e.signal.name() == "attribute_updated"
                && e.attr.as_deref().map(|a| a.starts_with("u_inject")).unwrap_or(false);
            if injecting {
                let node = &e.entity.name;
                let preceded = events[..i].iter().any(|p| {
                    p.signal.name() == "attribute_received"
                        && p.note
                            .as_deref()
                            .map(|n| n.starts_with(&format!("to {node}.y")))
                            .unwrap_or(false)
                });
                assert!(preceded, "{arch:?}: injection on {node} before any measurement");
            }
        }
    }
}
