//! Island handling: extraction of connected components with viability
//! rules, slack assignment, generation curtailment, the stepped-shedding
//! solve ladder, and overload tripping.

use std::collections::{HashMap, HashSet};

use crate::network::{BusKind, PowerNetwork};
use crate::powerflow::{branch_loading_percent, solve, PowerFlowSolution, SolveOptions};

/// One live island: in-service bus and branch ids plus its slack bus.
#[derive(Debug, Clone)]
pub struct Island {
    pub buses: Vec<usize>,
    pub branches: Vec<usize>,
    pub slack: usize,
}

/// Result of [`extract_islands`]: the islands that may operate, and the
/// components that were forced out of service because they lacked
/// generation or load.
#[derive(Debug, Clone, Default)]
pub struct IslandReport {
    pub islands: Vec<Island>,
    pub removed_buses: Vec<usize>,
    pub removed_branches: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components over in-service buses and branches. Each component
/// lists bus ids in network order; components appear in order of their
/// first bus.
pub fn in_service_components(net: &PowerNetwork) -> Vec<Vec<usize>> {
    let index = net.bus_index();
    let mut uf = UnionFind::new(net.buses.len());
    for br in net.branches.iter().filter(|b| b.in_service) {
        uf.union(index[&br.from_bus], index[&br.to_bus]);
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut root_pos: HashMap<usize, usize> = HashMap::new();
    for i in 0..net.buses.len() {
        if !net.buses[i].in_service {
            continue;
        }
        let root = uf.find(i);
        let pos = *root_pos.entry(root).or_insert_with(|| {
            components.push(Vec::new());
            components.len() - 1
        });
        components[pos].push(net.buses[i].id);
    }
    components
}

/// Splits the in-service part of the network into connected components and
/// applies the viability rules: a component without in-service generation or
/// without active load is taken out of service entirely. Every surviving
/// island gets exactly one slack bus (assigned to the largest-capacity
/// generator bus if none is present), and generation exceeding the effective
/// load is curtailed by a common factor.
pub fn extract_islands(net: &mut PowerNetwork) -> IslandReport {
    let components = in_service_components(net);

    let mut component_of_bus: HashMap<usize, usize> = HashMap::new();
    for (pos, comp) in components.iter().enumerate() {
        for &id in comp {
            component_of_bus.insert(id, pos);
        }
    }
    let mut branch_members: HashMap<usize, Vec<usize>> = HashMap::new();
    for br in net.branches.iter().filter(|b| b.in_service) {
        let pos = component_of_bus[&br.from_bus];
        branch_members.entry(pos).or_default().push(br.id);
    }

    let mut report = IslandReport::default();
    for (pos, bus_ids) in components.into_iter().enumerate() {
        let members: HashSet<usize> = bus_ids.iter().copied().collect();
        let has_generation = net
            .generators
            .iter()
            .any(|g| g.in_service && members.contains(&g.bus));
        let has_load = net
            .loads
            .iter()
            .any(|l| l.p > 0.0 && members.contains(&l.bus));
        if !has_generation || !has_load {
            for &id in &bus_ids {
                let tripped = net.remove_bus(id).expect("component bus exists");
                report.removed_branches.extend(tripped);
                report.removed_buses.push(id);
            }
            continue;
        }

        let slack = assign_slack(net, &bus_ids);
        curtail_generation(net, &bus_ids);

        let mut branches = branch_members.remove(&pos).unwrap_or_default();
        branches.sort_unstable();
        report.islands.push(Island {
            buses: bus_ids,
            branches,
            slack,
        });
    }
    report
}

/// Ensures the component has exactly one slack bus and returns its id.
///
/// If a slack bus is already present it is kept (extras are demoted to PV).
/// Otherwise the bus with the highest total in-service generation capacity
/// becomes slack, ties broken by lowest bus id.
pub fn assign_slack(net: &mut PowerNetwork, component: &[usize]) -> usize {
    let members: HashSet<usize> = component.iter().copied().collect();
    let mut slacks: Vec<usize> = net
        .buses
        .iter()
        .filter(|b| b.in_service && b.kind == BusKind::Slack && members.contains(&b.id))
        .map(|b| b.id)
        .collect();
    slacks.sort_unstable();
    if let Some(&keep) = slacks.first() {
        for &extra in &slacks[1..] {
            net.bus_mut(extra).unwrap().kind = BusKind::Pv;
        }
        return keep;
    }

    let mut capacity: HashMap<usize, f64> = HashMap::new();
    for g in net.generators.iter().filter(|g| g.in_service) {
        if members.contains(&g.bus) {
            *capacity.entry(g.bus).or_insert(0.0) += g.p_max;
        }
    }
    let (&best, _) = capacity
        .iter()
        .max_by(|(a_bus, a_cap), (b_bus, b_cap)| {
            a_cap.partial_cmp(b_cap).unwrap().then(b_bus.cmp(a_bus)) // lower id wins ties
        })
        .expect("assign_slack requires a generator in the component");
    net.bus_mut(best).unwrap().kind = BusKind::Slack;
    best
}

/// Scales every in-service generator setpoint in the component by the common
/// factor that matches total generation to total effective load. Reactive
/// setpoints are untouched. No-op unless generation exceeds load.
pub fn curtail_generation(net: &mut PowerNetwork, component: &[usize]) {
    let members: HashSet<usize> = component.iter().copied().collect();
    let total_set: f64 = net
        .generators
        .iter()
        .filter(|g| g.in_service && members.contains(&g.bus))
        .map(|g| g.p_set)
        .sum();
    let total_load: f64 = net
        .loads
        .iter()
        .filter(|l| members.contains(&l.bus))
        .map(|l| l.scale * l.p)
        .sum();
    if total_set > total_load {
        let factor = total_load / total_set;
        for g in net
            .generators
            .iter_mut()
            .filter(|g| g.in_service && members.contains(&g.bus))
        {
            g.p_set *= factor;
        }
    }
}

/// A materialized copy of one island, suitable for the solver.
pub fn subnetwork(net: &PowerNetwork, island: &Island) -> PowerNetwork {
    let members: HashSet<usize> = island.buses.iter().copied().collect();
    let branch_ids: HashSet<usize> = island.branches.iter().copied().collect();
    PowerNetwork {
        base_mva: net.base_mva,
        buses: net
            .buses
            .iter()
            .filter(|b| members.contains(&b.id))
            .cloned()
            .collect(),
        branches: net
            .branches
            .iter()
            .filter(|b| branch_ids.contains(&b.id))
            .cloned()
            .collect(),
        generators: net
            .generators
            .iter()
            .filter(|g| members.contains(&g.bus))
            .cloned()
            .collect(),
        loads: net
            .loads
            .iter()
            .filter(|l| members.contains(&l.bus))
            .cloned()
            .collect(),
    }
}

#[derive(Debug)]
pub enum ShedOutcome {
    /// The island solved at shedding factor `scale` (1.0 means no shedding).
    Solved {
        scale: f64,
        solution: PowerFlowSolution,
    },
    /// No rung of the ladder produced a solution; the island was taken out
    /// of service in full.
    Failed {
        removed_buses: Vec<usize>,
        removed_branches: Vec<usize>,
    },
}

/// Walks the shedding ladder s in {1.00, 0.95, ..., 0.05}. At each rung all
/// island loads are set to the common factor s (both P and Q); rungs whose
/// scaled demand exceeds the island generation capacity are skipped without
/// solving. The first converging rung wins. An island that fails the whole
/// ladder is marked out of service.
pub fn shed_and_solve(net: &mut PowerNetwork, island: &Island, opts: &SolveOptions) -> ShedOutcome {
    let members: HashSet<usize> = island.buses.iter().copied().collect();
    let capacity: f64 = net
        .generators
        .iter()
        .filter(|g| g.in_service && members.contains(&g.bus))
        .map(|g| g.p_max)
        .sum();
    let base_demand: f64 = net
        .loads
        .iter()
        .filter(|l| members.contains(&l.bus))
        .map(|l| l.p)
        .sum();

    for rung in (1..=20u32).rev() {
        let scale = f64::from(rung) / 20.0;
        if scale * base_demand > capacity {
            continue;
        }
        for l in net.loads.iter_mut().filter(|l| members.contains(&l.bus)) {
            l.scale = scale;
        }
        let sub = subnetwork(net, island);
        let solution = solve(&sub, opts);
        if solution.converged {
            return ShedOutcome::Solved { scale, solution };
        }
    }

    let mut removed_buses = Vec::new();
    let mut removed_branches = Vec::new();
    for &id in &island.buses {
        let tripped = net.remove_bus(id).expect("island bus exists");
        removed_branches.extend(tripped);
        removed_buses.push(id);
    }
    ShedOutcome::Failed {
        removed_buses,
        removed_branches,
    }
}

/// Trips every island branch loaded strictly above 100%, all in the same
/// call, and returns their ids. The re-solve happens on the caller's next
/// inner iteration.
pub fn remove_overloaded_branches(
    net: &mut PowerNetwork,
    island: &Island,
    solution: &PowerFlowSolution,
) -> Vec<usize> {
    let flows: HashMap<usize, _> = solution.flows.iter().map(|f| (f.branch, f)).collect();
    let mut removed = Vec::new();
    for &id in &island.branches {
        let rating = net.branch(id).expect("island branch exists").rating;
        let Some(flow) = flows.get(&id) else {
            continue;
        };
        let pct = branch_loading_percent(flow, rating, net.base_mva)
            .expect("ratings are normalized before cascading");
        if pct > 100.0 {
            net.remove_branch(id).expect("island branch exists");
            removed.push(id);
        }
    }
    removed
}
