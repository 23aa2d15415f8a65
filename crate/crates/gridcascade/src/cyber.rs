//! The cyber layer: topology construction, one-to-one coupling to power
//! buses, and giant-component survival semantics.
//!
//! Cyber nodes are dense indices 0..n where n equals the number of power
//! buses. Edges fail only as a consequence of node failure; nodes fail by
//! coupling (a failed power bus takes its cyber twin down) or by falling
//! outside the giant component.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::assignment::assign_coupling;
use crate::error::{Error, Result};
use crate::network::PowerNetwork;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyberNetwork {
    /// Undirected edges as (low, high) node pairs.
    pub edges: Vec<(usize, usize)>,
    pub node_in_service: Vec<bool>,
    pub edge_in_service: Vec<bool>,
    /// Power bus id -> cyber node.
    pub power_to_cyber: BTreeMap<usize, usize>,
    /// Cyber node -> power bus id.
    pub cyber_to_power: Vec<usize>,
}

impl CyberNetwork {
    pub fn node_count(&self) -> usize {
        self.node_in_service.len()
    }

    /// Marks a node failed together with its incident edges. Returns true
    /// if the node was in service before the call.
    pub fn fail_node(&mut self, node: usize) -> bool {
        if !self.node_in_service[node] {
            return false;
        }
        self.node_in_service[node] = false;
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if self.edge_in_service[i] && (u == node || v == node) {
                self.edge_in_service[i] = false;
            }
        }
        true
    }

    /// Connected components of the in-service subgraph, each sorted, listed
    /// by smallest contained node.
    pub fn in_service_components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if self.edge_in_service[i] {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if !self.node_in_service[start] || seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut members = Vec::new();
            seen[start] = true;
            while let Some(u) = stack.pop() {
                members.push(u);
                for &other in &adjacency[u] {
                    if self.node_in_service[other] && !seen[other] {
                        seen[other] = true;
                        stack.push(other);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CyberMode {
    /// No cyber layer: the cascade degrades to power-only propagation.
    None,
    /// Cyber topology copies the power branches, identity coupling.
    Mirror,
    /// Edge list from a file; coupling by coordinate assignment when both
    /// coordinate sets are available, identity otherwise.
    File(PathBuf),
}

impl std::str::FromStr for CyberMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CyberMode::None),
            "mirror" => Ok(CyberMode::Mirror),
            other => match other.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(CyberMode::File(PathBuf::from(path))),
                _ => Err(Error::Flag {
                    flag: "--cyber",
                    msg: format!("expected none, mirror or file:<path>, got `{other}`"),
                }),
            },
        }
    }
}

/// Text edge list: one `u v` pair of 0-based node ids per line. `#` starts
/// a comment.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (u, v) = match (it.next(), it.next(), it.next()) {
            (Some(u), Some(v), None) => (u, v),
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected `u v`, got `{line}`"),
                })
            }
        };
        let parse = |tok: &str| {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("invalid node id `{tok}`"),
            })
        };
        let (u, v) = (parse(u)?, parse(v)?);
        if u == v {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("self-loop on node {u}"),
            });
        }
        edges.push((u.min(v), u.max(v)));
    }
    Ok(edges)
}

/// Coordinate sidecar: one `id x y` triple per line.
pub fn parse_coords(text: &str) -> Result<Vec<(usize, f64, f64)>> {
    let mut coords = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected `id x y`, got `{line}`"),
            });
        }
        let id = toks[0].parse::<usize>().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("invalid id `{}`", toks[0]),
        })?;
        let x = toks[1].parse::<f64>().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("invalid coordinate `{}`", toks[1]),
        })?;
        let y = toks[2].parse::<f64>().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("invalid coordinate `{}`", toks[2]),
        })?;
        coords.push((id, x, y));
    }
    Ok(coords)
}

/// Builds the cyber layer for a power network.
///
/// `power_coords`, when given, are `(bus_id, x, y)` positions used together
/// with a file-mode coordinate sidecar (`<edges path>.coords`) to couple the
/// layers by minimum total cross-edge distance. Without coordinates the
/// coupling is positional: cyber node i pairs with the i-th bus.
pub fn build_cyber_topology(
    mode: &CyberMode,
    power: &PowerNetwork,
    power_coords: Option<&[(usize, f64, f64)]>,
) -> Result<Option<CyberNetwork>> {
    let n = power.buses.len();
    let identity_coupling = || -> (BTreeMap<usize, usize>, Vec<usize>) {
        let p2c = power
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect();
        let c2p = power.buses.iter().map(|b| b.id).collect();
        (p2c, c2p)
    };
    match mode {
        CyberMode::None => Ok(None),
        CyberMode::Mirror => {
            let pos: BTreeMap<usize, usize> = power
                .buses
                .iter()
                .enumerate()
                .map(|(i, b)| (b.id, i))
                .collect();
            let edges: Vec<(usize, usize)> = power
                .branches
                .iter()
                .filter(|br| br.in_service)
                .map(|br| {
                    let u = pos[&br.from_bus];
                    let v = pos[&br.to_bus];
                    (u.min(v), u.max(v))
                })
                .collect();
            let edge_count = edges.len();
            let (power_to_cyber, cyber_to_power) = identity_coupling();
            Ok(Some(CyberNetwork {
                edges,
                node_in_service: vec![true; n],
                edge_in_service: vec![true; edge_count],
                power_to_cyber,
                cyber_to_power,
            }))
        }
        CyberMode::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let edges = parse_edge_list(&text)?;
            for &(u, v) in &edges {
                let node = u.max(v);
                if node >= n {
                    return Err(Error::CyberNodeOutOfRange { node, bus_count: n });
                }
            }
            let sidecar = coords_sidecar(path);
            let (power_to_cyber, cyber_to_power) = match (power_coords, sidecar) {
                (Some(pc), Some(cc_path)) => {
                    let cc_text =
                        std::fs::read_to_string(&cc_path).map_err(|e| Error::io(&cc_path, e))?;
                    let cc = parse_coords(&cc_text)?;
                    couple_by_distance(power, pc, &cc)?
                }
                _ => identity_coupling(),
            };
            let edge_count = edges.len();
            Ok(Some(CyberNetwork {
                edges,
                node_in_service: vec![true; n],
                edge_in_service: vec![true; edge_count],
                power_to_cyber,
                cyber_to_power,
            }))
        }
    }
}

fn coords_sidecar(path: &Path) -> Option<PathBuf> {
    let mut name = path.file_name()?.to_os_string();
    name.push(".coords");
    let sidecar = path.with_file_name(name);
    sidecar.exists().then_some(sidecar)
}

fn couple_by_distance(
    power: &PowerNetwork,
    power_coords: &[(usize, f64, f64)],
    cyber_coords: &[(usize, f64, f64)],
) -> Result<(BTreeMap<usize, usize>, Vec<usize>)> {
    let n = power.buses.len();
    if cyber_coords.len() != n {
        return Err(Error::CoordCountMismatch(cyber_coords.len(), n));
    }
    let mut power_xy = Vec::with_capacity(n);
    for bus in &power.buses {
        let &(_, x, y) = power_coords
            .iter()
            .find(|&&(id, _, _)| id == bus.id)
            .ok_or(Error::MissingCoordinates("bus", bus.id))?;
        power_xy.push((x, y));
    }
    let mut cyber_slots = vec![None; n];
    for &(id, x, y) in cyber_coords {
        if id >= n {
            return Err(Error::CyberNodeOutOfRange {
                node: id,
                bus_count: n,
            });
        }
        cyber_slots[id] = Some((x, y));
    }
    let cyber_xy: Vec<(f64, f64)> = cyber_slots
        .into_iter()
        .enumerate()
        .map(|(id, xy)| xy.ok_or(Error::MissingCoordinates("cyber node", id)))
        .collect::<Result<_>>()?;

    let matching = assign_coupling(&cyber_xy, &power_xy)?;
    let mut power_to_cyber = BTreeMap::new();
    let mut cyber_to_power = vec![0; n];
    for (p_idx, &c_node) in matching.iter().enumerate() {
        let bus_id = power.buses[p_idx].id;
        power_to_cyber.insert(bus_id, c_node);
        cyber_to_power[c_node] = bus_id;
    }
    Ok((power_to_cyber, cyber_to_power))
}

/// Keeps only the giant component of the in-service cyber graph: every node
/// outside the largest component (ties broken toward the component holding
/// the smallest node id) is marked failed. Returns the newly failed nodes.
pub fn giant_component_prune(cyber: &mut CyberNetwork) -> Vec<usize> {
    let components = cyber.in_service_components();
    if components.is_empty() {
        return Vec::new();
    }
    // components are listed by smallest contained node, so a strict > keeps
    // the earliest (smallest-id) component on size ties.
    let mut giant = 0;
    for (i, comp) in components.iter().enumerate() {
        if comp.len() > components[giant].len() {
            giant = i;
        }
    }
    let mut failed = Vec::new();
    for (i, comp) in components.iter().enumerate() {
        if i == giant {
            continue;
        }
        for &node in comp {
            if cyber.fail_node(node) {
                failed.push(node);
            }
        }
    }
    failed.sort_unstable();
    failed
}
