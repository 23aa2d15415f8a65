//! Command-line interface: single cascade runs and Monte-Carlo sweeps.
//!
//! Exit codes: 0 on normal termination, 2 on input errors, 3 when a cascade
//! hits the iteration safety cap (abnormal termination).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cascade::{run_cascade, CascadeOutcome, Termination};
use crate::cyber::{build_cyber_topology, parse_coords, CyberMode};
use crate::error::{Error, Result};
use crate::network::RatingConfig;
use crate::powerflow::SolveOptions;
use crate::sweep::{prepare_network, run_sweep, AttackTarget, SweepConfig};

#[derive(Parser)]
#[command(
    name = "gridcascade",
    version,
    about = "Cascading-failure simulation for cyber-physical power grids"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run one cascade for a fixed attack and dump per-phase snapshots.
    Run(RunArgs),
    /// Sweep random attacks of growing size and tabulate blackout
    /// probabilities.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Case file (MATPOWER .m or the JSON dump format).
    #[arg(long)]
    pub case: PathBuf,

    /// Cyber topology: none, mirror, or file:<edge list path>.
    #[arg(long, default_value = "none")]
    pub cyber: CyberMode,

    /// Power bus coordinates (`bus_id x y` per line) for distance-based
    /// coupling of file-mode cyber topologies.
    #[arg(long)]
    pub coords: Option<PathBuf>,

    /// Bus ids to attack, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub attack_buses: Vec<usize>,

    /// Branch ids (0-based position in the case file) to attack.
    #[arg(long, value_delimiter = ',')]
    pub attack_branches: Vec<usize>,

    /// Recorded in the summary; a fully specified run has no randomness.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Directory for per-phase snapshot files and summary.json.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,

    /// Rating margin for branches without a limit in the case file.
    #[arg(long, default_value_t = 1.2)]
    pub alpha: f64,

    /// Smallest rating ever assigned, MVA.
    #[arg(long, default_value_t = 5.0)]
    pub rating_floor: f64,

    /// Power-flow convergence tolerance, p.u.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    /// Newton iteration cap per solve.
    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub case: PathBuf,

    #[arg(long, default_value = "none")]
    pub cyber: CyberMode,

    #[arg(long)]
    pub coords: Option<PathBuf>,

    /// What the random attacks remove: buses or branches.
    #[arg(long)]
    pub target: AttackTarget,

    #[arg(long)]
    pub k_min: usize,

    #[arg(long)]
    pub k_max: usize,

    /// Cascade runs per attack size.
    #[arg(long)]
    pub runs: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 1.2)]
    pub alpha: f64,

    #[arg(long, default_value_t = 5.0)]
    pub rating_floor: f64,

    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
}

#[derive(Serialize)]
struct RunSummary {
    blackout: bool,
    termination: &'static str,
    iterations: u32,
    initial_buses: usize,
    initial_branches: usize,
    initial_load_mw: f64,
    in_service_buses: usize,
    in_service_branches: usize,
    served_load_mw: f64,
    shed_load_mw: f64,
    failed_buses: usize,
    failed_branches: usize,
    failed_cyber_nodes: usize,
    failed_cyber_edges: usize,
    seed: Option<u64>,
}

impl RunSummary {
    fn new(outcome: &CascadeOutcome, seed: Option<u64>) -> Self {
        let state = &outcome.state;
        RunSummary {
            blackout: outcome.blackout,
            termination: match outcome.termination {
                Termination::Stopped => "stopped",
                Termination::SafetyCap => "safety_cap",
            },
            iterations: state.iteration,
            initial_buses: state.initial_bus_count,
            initial_branches: state.initial_branch_count,
            initial_load_mw: state.initial_load_mw,
            in_service_buses: state.power.in_service_bus_count(),
            in_service_branches: state.power.in_service_branch_count(),
            served_load_mw: state.served_load_mw(),
            shed_load_mw: state.shed_load_mw(),
            failed_buses: state.failed_power_buses.len(),
            failed_branches: state.failed_power_branches.len(),
            failed_cyber_nodes: state.failed_cyber_nodes.len(),
            failed_cyber_edges: state.failed_cyber_edges.len(),
            seed,
        }
    }
}

/// Runs the parsed command and maps the outcome to an exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(()) => 0,
        Err(Error::SafetyCap(n)) => {
            eprintln!("error: cascade exceeded the safety cap of {n} iterations");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let solver = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..SolveOptions::default()
    };
    let rating = RatingConfig {
        alpha: args.alpha,
        floor_mva: args.rating_floor,
    };
    let net = prepare_network(&args.case, &rating, &solver)?;
    let coords = match &args.coords {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(parse_coords(&text)?)
        }
        None => None,
    };
    let cyber = build_cyber_topology(&args.cyber, &net, coords.as_deref())?;

    let outcome = run_cascade(
        &net,
        cyber.as_ref(),
        &args.attack_buses,
        &args.attack_branches,
        &solver,
    )?;

    let summary = RunSummary::new(&outcome, args.seed);
    if let Some(dir) = &args.snapshots {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for snap in &outcome.state.phase_log {
            let path = dir.join(format!("it{:02}_{}.json", snap.iteration, snap.phase));
            let body = serde_json::to_string_pretty(snap).expect("snapshot serializes");
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("summary.json");
        let body = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }

    println!("blackout: {}", summary.blackout);
    println!("termination: {}", summary.termination);
    println!("iterations: {}", summary.iterations);
    println!(
        "initial: {} buses, {} branches, {:.6} MW",
        summary.initial_buses, summary.initial_branches, summary.initial_load_mw
    );
    println!(
        "in_service: {} buses, {} branches",
        summary.in_service_buses, summary.in_service_branches
    );
    println!("served_load_mw: {:.6}", summary.served_load_mw);
    println!("shed_load_mw: {:.6}", summary.shed_load_mw);
    println!(
        "failed: {} buses, {} branches, {} cyber nodes, {} cyber edges",
        summary.failed_buses,
        summary.failed_branches,
        summary.failed_cyber_nodes,
        summary.failed_cyber_edges
    );

    if outcome.termination == Termination::SafetyCap {
        return Err(Error::SafetyCap(outcome.state.iteration));
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let config = SweepConfig {
        case: args.case.clone(),
        cyber: args.cyber.clone(),
        coords: args.coords.clone(),
        target: args.target,
        k_min: args.k_min,
        k_max: args.k_max,
        runs: args.runs,
        seed: args.seed,
        solver: SolveOptions {
            tol: args.tol,
            max_iter: args.max_iter,
            ..SolveOptions::default()
        },
        rating: RatingConfig {
            alpha: args.alpha,
            floor_mva: args.rating_floor,
        },
    };
    let result = run_sweep(&config)?;
    let csv = result.to_csv();
    std::fs::write(&args.out, &csv).map_err(|e| Error::io(&args.out, e))?;
    print!("{csv}");
    Ok(())
}
