//! Built-in study instances, mirroring the default configurations of the
//! three case studies.

use crate::benders_cg::VirtualArchitecture;
use crate::gas::{paper_gas_spec, GasNetworkSpec};
use crate::mpc::MpcSpec;
use crate::resource::{ResourceAllocationSpec, Scenario};

pub const GAS: &str = "paper-gas";
pub const BENDERS: &str = "paper-benders";
pub const REACTOR: &str = "paper-reactor";

pub fn gas_preset() -> GasNetworkSpec {
    paper_gas_spec()
}

/// Default resource-allocation instance: two bases, three districts, eight
/// sampled scenarios with district-dependent demands.
pub fn benders_preset() -> ResourceAllocationSpec {
    let scenarios = (0..8)
        .map(|s| {
            let phase = s as f64 / 8.0;
            Scenario {
                probabilities: vec![0.5, 0.3, 0.2],
                demands: vec![
                    1.0 + 0.8 * phase,
                    2.0 - 0.5 * phase,
                    0.5 + 1.5 * phase * phase,
                ],
            }
        })
        .collect();
    ResourceAllocationSpec {
        initial: vec![2.0, 1.0],
        purchase_cost: vec![1.0, 1.4],
        base_arcs: vec![(0, 1, 0.2), (1, 0, 0.2)],
        district_arcs: vec![(0, 0), (0, 1), (1, 1), (1, 2)],
        budget: 1.5,
        scenarios,
    }
}

pub fn benders_architecture() -> VirtualArchitecture {
    VirtualArchitecture::default()
}

pub fn reactor_preset() -> MpcSpec {
    MpcSpec::default()
}

pub fn names() -> &'static [&'static str] {
    &[GAS, BENDERS, REACTOR]
}
