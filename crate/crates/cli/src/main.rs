//! Command-line front end: model-graph demo, case-study runs with trace and
//! CSV outputs, and SVG Gantt rendering of traces.
//!
//! Exit codes: 0 success, 2 usage error, 3 bad spec, 4 runtime failure.

mod gantt;

use clap::{Parser, Subcommand, ValueEnum};
use graphkit_core::model::ComponentModel;
use graphkit_core::modelgraph::ModelGraph;
use graphkit_core::solvers::kkt::{newton_kkt, KktOptions};
use graphkit_sim::TraceDocument;
use graphkit_studies::benders_cg::{
    run_benders_computegraph, TimePolicy, VirtualArchitecture,
};
use graphkit_studies::gas::{gas_structure_report, GasNetworkSpec};
use graphkit_studies::mpc::{run_mpc, MpcArchitecture, MpcSpec};
use graphkit_studies::presets;
use graphkit_studies::resource::ResourceAllocationSpec;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "graphkit", version, about = "graph-structured optimization and computing-graph simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a three-node model graph, solve it, print per-node solutions.
    DemoModelgraph {
        /// Write the canonical flattened-problem dump to this path.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run a case study from a preset or a JSON spec.
    Run {
        study: Study,
        /// Named preset; defaults to the study's built-in instance.
        #[arg(long)]
        preset: Option<String>,
        /// JSON spec file overriding the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Worker CPUs (benders).
        #[arg(long)]
        workers: Option<usize>,
        /// Communication delay in seconds (benders).
        #[arg(long)]
        delay: Option<f64>,
        /// Simulated horizon in seconds (mpc).
        #[arg(long)]
        horizon: Option<f64>,
        /// Space points per pipeline (gas).
        #[arg(long)]
        nx: Option<usize>,
        /// Time points (gas).
        #[arg(long)]
        nt: Option<usize>,
        /// Partition count (gas).
        #[arg(long)]
        k: Option<usize>,
        /// Controller architecture (mpc).
        #[arg(long)]
        arch: Option<Arch>,
        /// Cooperative coordination iterations (mpc).
        #[arg(long)]
        iter_max: Option<usize>,
        /// Write the trace JSON here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write study CSV output here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Render the trace as an SVG Gantt chart here.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Replace walltime task durations with fixed ones.
        #[arg(long)]
        deterministic: bool,
    },
    /// Render a trace JSON file as an SVG Gantt chart.
    Gantt { trace: PathBuf, out: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    Gas,
    Benders,
    Mpc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Centralized,
    Decentralized,
    Cooperative,
}

impl From<Arch> for MpcArchitecture {
    fn from(a: Arch) -> Self {
        match a {
            Arch::Centralized => MpcArchitecture::Centralized,
            Arch::Decentralized => MpcArchitecture::Decentralized,
            Arch::Cooperative => MpcArchitecture::Cooperative,
        }
    }
}

enum CliError {
    Spec(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Spec(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Spec(m) | CliError::Runtime(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::DemoModelgraph { dump } => demo_modelgraph(dump.as_deref()),
        Command::Gantt { trace, out } => {
            let text = std::fs::read_to_string(&trace)
                .map_err(|e| CliError::Spec(format!("cannot read {}: {e}", trace.display())))?;
            let doc = TraceDocument::from_json(&text)
                .map_err(|e| CliError::Spec(format!("bad trace: {e}")))?;
            write_file(&out, &gantt::render(&doc))
        }
        Command::Run {
            study,
            preset,
            spec,
            workers,
            delay,
            horizon,
            nx,
            nt,
            k,
            arch,
            iter_max,
            trace,
            csv,
            svg,
            deterministic,
        } => {
            if let Some(name) = &preset {
                if !presets::names().contains(&name.as_str()) {
                    return Err(CliError::Spec(format!(
                        "unknown preset `{name}`; available: {}",
                        presets::names().join(", ")
                    )));
                }
            }
            match study {
                Study::Gas => run_gas(spec.as_deref(), nx, nt, k, csv.as_deref()),
                Study::Benders => run_benders(
                    spec.as_deref(),
                    workers,
                    delay,
                    deterministic,
                    trace.as_deref(),
                    csv.as_deref(),
                    svg.as_deref(),
                ),
                Study::Mpc => run_mpc_study(
                    spec.as_deref(),
                    arch.map(Into::into),
                    horizon,
                    iter_max,
                    trace.as_deref(),
                    csv.as_deref(),
                    svg.as_deref(),
                ),
            }
        }
    }
}

fn demo_modelgraph(dump: Option<&Path>) -> Result<(), CliError> {
    let mut mg = ModelGraph::new();
    let targets = [-1.0, 0.5, 2.0];
    let mut nodes = Vec::new();
    for t in targets {
        let node = mg.add_node();
        let mut m = ComponentModel::new();
        let x = m
            .add_variable("x", 0.0)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        m.set_objective((x - t).square())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        mg.set_model(node, m)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        nodes.push(node);
    }
    mg.add_link_constraint(
        &[(nodes[0], "x", 1.0), (nodes[1], "x", 1.0), (nodes[2], "x", 1.0)],
        0.0,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    let flat = mg
        .aggregate()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let sol = newton_kkt(&flat, KktOptions::default())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let link_residual = flat.link_residuals(&sol.x)[0].abs();
    if link_residual > 1e-8 {
        return Err(CliError::Runtime(format!(
            "link constraint violated by {link_residual:e}"
        )));
    }
    for (node, value) in nodes.iter().zip(&sol.x) {
        println!("{node}.x = {value:.6}");
    }
    println!("link residual = {link_residual:.3e}");
    if let Some(path) = dump {
        write_file(path, &flat.dump())?;
    }
    Ok(())
}

fn load_spec<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Spec(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Spec(format!("bad spec: {e}")))
}

fn run_gas(
    spec: Option<&Path>,
    nx: Option<usize>,
    nt: Option<usize>,
    k: Option<usize>,
    csv: Option<&Path>,
) -> Result<(), CliError> {
    let mut gas: GasNetworkSpec = match spec {
        Some(p) => load_spec(p)?,
        None => presets::gas_preset(),
    };
    if let Some(nx) = nx {
        gas.mesh.nx = nx;
    }
    if let Some(nt) = nt {
        gas.mesh.nt = nt;
        gas.demand_profile = (0..nt)
            .map(|i| if i < nt / 2 { 1.0 } else { 0.6 })
            .collect();
    }
    let k = k.unwrap_or(13);
    let report = gas_structure_report(&gas, k).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if let Some(path) = csv {
        let mut out = String::from("scale,nx,size,schur_ms,direct_ms\n");
        for row in &report.sweep {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.scale, row.nx, row.size, row.schur_ms, row.direct_ms
            ));
        }
        write_file(path, &out)?;
    }
    Ok(())
}

fn run_benders(
    spec: Option<&Path>,
    workers: Option<usize>,
    delay: Option<f64>,
    deterministic: bool,
    trace: Option<&Path>,
    csv: Option<&Path>,
    svg: Option<&Path>,
) -> Result<(), CliError> {
    let resource_spec: ResourceAllocationSpec = match spec {
        Some(p) => load_spec(p)?,
        None => presets::benders_preset(),
    };
    resource_spec
        .validate()
        .map_err(|e| CliError::Spec(e.to_string()))?;
    let mut arch = VirtualArchitecture::default();
    if let Some(w) = workers {
        arch.workers = w;
    }
    if let Some(d) = delay {
        arch.delay = d;
    }
    if deterministic {
        arch.master_time = TimePolicy::Fixed(0.001);
        arch.sub_time = TimePolicy::Fixed(0.002);
    }
    let report = run_benders_computegraph(&resource_spec, &arch, 1e-8, None)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "objective = {:.9}  rounds = {}  makespan = {:.6} s  status = {:?}",
        report.objective, report.rounds, report.makespan, report.status
    );
    if let Some(path) = csv {
        let numeric = resource_spec
            .solve_benders(&graphkit_core::decomp::BendersOptions::default())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(path, &numeric.state.to_csv())?;
    }
    if let Some(path) = trace {
        write_file(path, &report.trace.to_json())?;
    }
    if let Some(path) = svg {
        write_file(path, &gantt::render(&report.trace))?;
    }
    Ok(())
}

fn run_mpc_study(
    spec: Option<&Path>,
    arch: Option<MpcArchitecture>,
    horizon: Option<f64>,
    iter_max: Option<usize>,
    trace: Option<&Path>,
    csv: Option<&Path>,
    svg: Option<&Path>,
) -> Result<(), CliError> {
    let mut mpc_spec: MpcSpec = match spec {
        Some(p) => load_spec(p)?,
        None => presets::reactor_preset(),
    };
    if let Some(n) = iter_max {
        mpc_spec.iter_max = n;
    }
    let arch = arch.unwrap_or(MpcArchitecture::Centralized);
    let horizon = horizon.unwrap_or(5000.0);
    let report =
        run_mpc(&mpc_spec, arch, horizon).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "architecture = {arch:?}  status = {:?}  error(0) = {:.4}  error({horizon}) = {:.4}",
        report.status, report.initial_error, report.terminal_error
    );
    if let Some(path) = csv {
        let series: Vec<(f64, graphkit_sim::AttrValue)> = report
            .state_series
            .iter()
            .map(|(t, x)| (*t, graphkit_sim::AttrValue::Vector(x.clone())))
            .collect();
        write_file(path, &graphkit_sim::series_csv(&series))?;
    }
    if let Some(path) = trace {
        write_file(path, &report.trace.to_json())?;
    }
    if let Some(path) = svg {
        write_file(path, &gantt::render(&report.trace))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}
