//! The asynchronous phase engine.
//!
//! One cascade run owns a working copy of both layers. After the trigger,
//! phases execute in a fixed order per outer iteration:
//!
//!   A: power-side propagation to a fixpoint (islanding, shedding ladder,
//!      overload tripping),
//!   B: newly failed power buses take their cyber twins down (or the run
//!      stops if phase A found nothing new),
//!   C: the cyber graph keeps only its giant component,
//!   D: newly failed cyber nodes take their power twins down (or the run
//!      stops if the cyber layer lost nothing this iteration).
//!
//! Failures cross layers only at B and D, so each layer propagates alone
//! within its phase. Cross-layer marking uses per-iteration deltas, never
//! the cumulative failed sets; old failures do not re-propagate.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::cyber::{giant_component_prune, CyberNetwork};
use crate::error::{Error, Result};
use crate::islands::{extract_islands, remove_overloaded_branches, shed_and_solve, ShedOutcome};
use crate::network::PowerNetwork;
use crate::powerflow::SolveOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    #[serde(rename = "trigger")]
    Trigger,
    A,
    B,
    C,
    D,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::Trigger => write!(f, "trigger"),
            Phase::A => write!(f, "A"),
            Phase::B => write!(f, "B"),
            Phase::C => write!(f, "C"),
            Phase::D => write!(f, "D"),
        }
    }
}

/// Island membership or failure marker of one node, in either layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NodeState {
    InService { island: usize },
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeState {
    pub from: usize,
    pub to: usize,
    pub in_service: bool,
}

/// Per-layer view at one instant: island assignment per node, service flag
/// per edge, and (for the power layer) effective load served per island.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSnapshot {
    pub nodes: BTreeMap<usize, NodeState>,
    pub edges: BTreeMap<usize, EdgeState>,
    pub island_served_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSnapshot {
    pub iteration: u32,
    pub phase: Phase,
    pub served_load_mw: f64,
    pub power: LayerSnapshot,
    pub cyber: Option<LayerSnapshot>,
}

#[derive(Debug, Clone)]
pub struct CascadeState {
    pub power: PowerNetwork,
    pub cyber: Option<CyberNetwork>,
    pub failed_power_buses: BTreeSet<usize>,
    pub failed_power_branches: BTreeSet<usize>,
    pub failed_cyber_nodes: BTreeSet<usize>,
    pub failed_cyber_edges: BTreeSet<usize>,
    pub stopped: bool,
    pub initial_bus_count: usize,
    pub initial_branch_count: usize,
    pub initial_load_mw: f64,
    pub iteration: u32,
    pub phase_log: Vec<PhaseSnapshot>,
    /// Power components newly failed since the end of the previous phase A
    /// (the trigger counts toward the first iteration).
    pending_bus_failures: BTreeSet<usize>,
    pending_branch_failures: BTreeSet<usize>,
    /// Cyber nodes newly failed during the current iteration (phases B + C).
    pending_cyber_failures: BTreeSet<usize>,
    /// Deltas published at the end of phases A and C; consumed by B and D.
    bus_delta: BTreeSet<usize>,
    branch_delta: BTreeSet<usize>,
    cyber_delta: BTreeSet<usize>,
}

impl CascadeState {
    /// Captures baseline totals (bus count n, branch count m, total active
    /// load l) before any attack.
    pub fn new(power: &PowerNetwork, cyber: Option<&CyberNetwork>) -> Self {
        CascadeState {
            initial_bus_count: power.in_service_bus_count(),
            initial_branch_count: power.in_service_branch_count(),
            initial_load_mw: power.served_load_mw(),
            power: power.clone(),
            cyber: cyber.cloned(),
            failed_power_buses: BTreeSet::new(),
            failed_power_branches: BTreeSet::new(),
            failed_cyber_nodes: BTreeSet::new(),
            failed_cyber_edges: BTreeSet::new(),
            stopped: false,
            iteration: 0,
            phase_log: Vec::new(),
            pending_bus_failures: BTreeSet::new(),
            pending_branch_failures: BTreeSet::new(),
            pending_cyber_failures: BTreeSet::new(),
            bus_delta: BTreeSet::new(),
            branch_delta: BTreeSet::new(),
            cyber_delta: BTreeSet::new(),
        }
    }

    fn fail_bus(&mut self, id: usize) {
        if self.power.bus(id).map(|b| b.in_service) != Some(true) {
            return;
        }
        let tripped = self.power.remove_bus(id).expect("bus exists");
        self.failed_power_buses.insert(id);
        self.pending_bus_failures.insert(id);
        for branch in tripped {
            self.failed_power_branches.insert(branch);
            self.pending_branch_failures.insert(branch);
        }
    }

    fn fail_branch(&mut self, id: usize) {
        if self.power.branch(id).map(|b| b.in_service) != Some(true) {
            return;
        }
        self.power.remove_branch(id).expect("branch exists");
        self.failed_power_branches.insert(id);
        self.pending_branch_failures.insert(id);
    }

    fn fail_cyber_node(&mut self, node: usize) {
        let Some(cyber) = self.cyber.as_mut() else {
            return;
        };
        if cyber.fail_node(node) {
            self.failed_cyber_nodes.insert(node);
            self.pending_cyber_failures.insert(node);
            for (i, &(u, v)) in cyber.edges.iter().enumerate() {
                if (u == node || v == node) && !cyber.edge_in_service[i] {
                    self.failed_cyber_edges.insert(i);
                }
            }
        }
    }

    /// Marks the attacked components out of service. Ids must exist; empty
    /// sets are allowed.
    pub fn trigger(&mut self, attacked_buses: &[usize], attacked_branches: &[usize]) -> Result<()> {
        for &id in attacked_buses {
            if self.power.bus(id).is_none() {
                return Err(Error::UnknownBus(id));
            }
        }
        for &id in attacked_branches {
            if self.power.branch(id).is_none() {
                return Err(Error::UnknownBranch(id));
            }
        }
        for &id in attacked_buses {
            self.fail_bus(id);
        }
        for &id in attacked_branches {
            self.fail_branch(id);
        }
        self.snapshot(Phase::Trigger);
        Ok(())
    }

    /// Phase A: propagate failures inside the power layer until an inner
    /// iteration produces no new out-of-service component, then publish the
    /// newly failed sets for phase B.
    pub fn phase_a(&mut self, opts: &SolveOptions) {
        loop {
            let mut new_failure = false;
            let report = extract_islands(&mut self.power);
            for id in &report.removed_buses {
                self.failed_power_buses.insert(*id);
                self.pending_bus_failures.insert(*id);
                new_failure = true;
            }
            for id in &report.removed_branches {
                self.failed_power_branches.insert(*id);
                self.pending_branch_failures.insert(*id);
                new_failure = true;
            }
            for island in &report.islands {
                match shed_and_solve(&mut self.power, island, opts) {
                    ShedOutcome::Solved { solution, .. } => {
                        let removed =
                            remove_overloaded_branches(&mut self.power, island, &solution);
                        for id in removed {
                            self.failed_power_branches.insert(id);
                            self.pending_branch_failures.insert(id);
                            new_failure = true;
                        }
                    }
                    ShedOutcome::Failed {
                        removed_buses,
                        removed_branches,
                    } => {
                        for id in removed_buses {
                            self.failed_power_buses.insert(id);
                            self.pending_bus_failures.insert(id);
                        }
                        for id in removed_branches {
                            self.failed_power_branches.insert(id);
                            self.pending_branch_failures.insert(id);
                        }
                        new_failure = true;
                    }
                }
            }
            if !new_failure {
                break;
            }
        }
        self.bus_delta = std::mem::take(&mut self.pending_bus_failures);
        self.branch_delta = std::mem::take(&mut self.pending_branch_failures);
        self.snapshot(Phase::A);
    }

    /// Phase B: stop if phase A failed nothing, otherwise mark the cyber
    /// twins of the newly failed power buses. Without a cyber layer the run
    /// stops as soon as phase A reaches a fixpoint with no new failure.
    pub fn phase_b(&mut self) {
        match &self.cyber {
            None => {
                if self.bus_delta.is_empty() && self.branch_delta.is_empty() {
                    self.stopped = true;
                }
            }
            Some(_) => {
                if self.bus_delta.is_empty() {
                    self.stopped = true;
                } else {
                    let delta: Vec<usize> = self.bus_delta.iter().copied().collect();
                    for bus in delta {
                        let node = self
                            .cyber
                            .as_ref()
                            .and_then(|c| c.power_to_cyber.get(&bus).copied());
                        if let Some(node) = node {
                            self.fail_cyber_node(node);
                        }
                    }
                }
            }
        }
        self.snapshot(Phase::B);
    }

    /// Phase C: prune the cyber graph to its giant component, then publish
    /// this iteration's cyber failures (phases B and C) for phase D.
    pub fn phase_c(&mut self) {
        if let Some(cyber) = self.cyber.as_mut() {
            let pruned = giant_component_prune(cyber);
            for node in pruned {
                self.failed_cyber_nodes.insert(node);
                self.pending_cyber_failures.insert(node);
            }
            let cyber = self.cyber.as_ref().unwrap();
            for (i, alive) in cyber.edge_in_service.iter().enumerate() {
                if !alive {
                    self.failed_cyber_edges.insert(i);
                }
            }
        }
        self.cyber_delta = std::mem::take(&mut self.pending_cyber_failures);
        self.snapshot(Phase::C);
    }

    /// Phase D: stop if the cyber layer lost nothing this iteration,
    /// otherwise take the power twins of newly failed cyber nodes out of
    /// service.
    pub fn phase_d(&mut self) {
        if self.cyber_delta.is_empty() {
            self.stopped = true;
        } else {
            let delta: Vec<usize> = self.cyber_delta.iter().copied().collect();
            for node in delta {
                let bus = self.cyber.as_ref().map(|c| c.cyber_to_power[node]);
                if let Some(bus) = bus {
                    self.fail_bus(bus);
                }
            }
        }
        self.snapshot(Phase::D);
    }

    /// Blackout verdict: more than half of the buses, branches, or total
    /// active load lost relative to the pre-attack baseline (strict).
    pub fn check_blackout(&self) -> bool {
        let buses = self.power.in_service_bus_count() as f64;
        let branches = self.power.in_service_branch_count() as f64;
        let served = self.power.served_load_mw();
        buses < self.initial_bus_count as f64 / 2.0
            || branches < self.initial_branch_count as f64 / 2.0
            || served < self.initial_load_mw / 2.0
    }

    pub fn served_load_mw(&self) -> f64 {
        self.power.served_load_mw()
    }

    /// Effective load intentionally shed (live buses only): sum of
    /// (1 - scale) * p.
    pub fn shed_load_mw(&self) -> f64 {
        let live: BTreeSet<usize> = self
            .power
            .buses
            .iter()
            .filter(|b| b.in_service)
            .map(|b| b.id)
            .collect();
        self.power
            .loads
            .iter()
            .filter(|l| live.contains(&l.bus))
            .map(|l| (1.0 - l.scale) * l.p)
            .sum()
    }

    fn snapshot(&mut self, phase: Phase) {
        let power = power_layer_snapshot(&self.power);
        let cyber = self.cyber.as_ref().map(cyber_layer_snapshot);
        self.phase_log.push(PhaseSnapshot {
            iteration: self.iteration,
            phase,
            served_load_mw: self.power.served_load_mw(),
            power,
            cyber,
        });
    }
}

fn power_layer_snapshot(net: &PowerNetwork) -> LayerSnapshot {
    let components = crate::islands::in_service_components(net);
    let mut nodes: BTreeMap<usize, NodeState> = net
        .buses
        .iter()
        .filter(|b| !b.in_service)
        .map(|b| (b.id, NodeState::Failed))
        .collect();
    let mut island_served_mw = Vec::with_capacity(components.len());
    for (island, members) in components.iter().enumerate() {
        for &id in members {
            nodes.insert(id, NodeState::InService { island });
        }
        let served = net
            .loads
            .iter()
            .filter(|l| members.contains(&l.bus))
            .map(|l| l.scale * l.p)
            .sum();
        island_served_mw.push(served);
    }
    let edges = net
        .branches
        .iter()
        .map(|br| {
            (
                br.id,
                EdgeState {
                    from: br.from_bus,
                    to: br.to_bus,
                    in_service: br.in_service,
                },
            )
        })
        .collect();
    LayerSnapshot {
        nodes,
        edges,
        island_served_mw,
    }
}

fn cyber_layer_snapshot(cyber: &CyberNetwork) -> LayerSnapshot {
    let components = cyber.in_service_components();
    let mut nodes: BTreeMap<usize, NodeState> = (0..cyber.node_count())
        .filter(|&n| !cyber.node_in_service[n])
        .map(|n| (n, NodeState::Failed))
        .collect();
    for (island, members) in components.iter().enumerate() {
        for &n in members {
            nodes.insert(n, NodeState::InService { island });
        }
    }
    let edges = cyber
        .edges
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| {
            (
                i,
                EdgeState {
                    from: u,
                    to: v,
                    in_service: cyber.edge_in_service[i],
                },
            )
        })
        .collect();
    LayerSnapshot {
        nodes,
        edges,
        island_served_mw: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The loop stopped because a phase found no new failure.
    Stopped,
    /// The safety cap on outer iterations was hit; this indicates a bug in
    /// the monotonicity of failure bookkeeping, never normal operation.
    SafetyCap,
}

#[derive(Debug)]
pub struct CascadeOutcome {
    pub blackout: bool,
    pub termination: Termination,
    pub state: CascadeState,
}

/// Runs a whole cascade: trigger, then the phase loop until a stop, then
/// the blackout verdict. The per-phase snapshot log stays on the state.
pub fn run_cascade(
    power: &PowerNetwork,
    cyber: Option<&CyberNetwork>,
    attacked_buses: &[usize],
    attacked_branches: &[usize],
    opts: &SolveOptions,
) -> Result<CascadeOutcome> {
    let mut state = CascadeState::new(power, cyber);
    state.trigger(attacked_buses, attacked_branches)?;
    // Unreachable if failed sets grow monotonically: every non-stopping
    // iteration fails at least one more component.
    let cap = (state.initial_bus_count + state.initial_branch_count + 1) as u32;
    let termination = loop {
        if state.iteration >= cap {
            log::error!("cascade hit the safety cap of {cap} iterations");
            break Termination::SafetyCap;
        }
        state.iteration += 1;
        state.phase_a(opts);
        state.phase_b();
        if state.stopped {
            break Termination::Stopped;
        }
        state.phase_c();
        state.phase_d();
        if state.stopped {
            break Termination::Stopped;
        }
    };
    Ok(CascadeOutcome {
        blackout: state.check_blackout(),
        termination,
        state,
    })
}
