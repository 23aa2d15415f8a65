//! Power-network data model.
//!
//! Everything electrical is stored in per-unit on the system MVA base;
//! generator setpoints, load demands and branch ratings stay in MW/MVAr/MVA
//! and are converted at the solver boundary.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Voltage magnitude, p.u. For PV and slack buses this is the regulated
    /// setpoint; for PQ buses it is only an initial guess.
    pub v_mag: f64,
    /// Voltage angle, radians.
    pub v_ang: f64,
    /// Shunt conductance, p.u.
    pub g_sh: f64,
    /// Shunt susceptance, p.u.
    pub b_sh: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series conductance g_lm, p.u.
    pub g: f64,
    /// Series susceptance b_lm, p.u.
    pub b: f64,
    /// Total charging susceptance b_c,lm, p.u. (half at each terminal).
    pub b_c: f64,
    /// Apparent-power limit, MVA. Zero means "not yet normalized".
    pub rating: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    /// Active-power setpoint, MW.
    pub p_set: f64,
    /// Reactive-power setpoint, MVAr (used only when the bus is PQ).
    pub q_set: f64,
    /// Capacity, MW.
    pub p_max: f64,
    pub p_min: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    /// Active demand, MW, before scaling.
    pub p: f64,
    /// Reactive demand, MVAr, before scaling.
    pub q: f64,
    /// Shedding factor; effective demand is (scale * p, scale * q).
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
}

impl PowerNetwork {
    /// Map from bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_mut(&mut self, id: usize) -> Option<&mut Bus> {
        self.buses.iter_mut().find(|b| b.id == id)
    }

    pub fn branch(&self, id: usize) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn in_service_bus_count(&self) -> usize {
        self.buses.iter().filter(|b| b.in_service).count()
    }

    pub fn in_service_branch_count(&self) -> usize {
        self.branches.iter().filter(|b| b.in_service).count()
    }

    /// Total effective active load (sum of scale * p) at in-service buses, MW.
    pub fn served_load_mw(&self) -> f64 {
        let live: HashSet<usize> = self
            .buses
            .iter()
            .filter(|b| b.in_service)
            .map(|b| b.id)
            .collect();
        self.loads
            .iter()
            .filter(|l| live.contains(&l.bus))
            .map(|l| l.scale * l.p)
            .sum()
    }

    /// Marks a bus out of service together with every incident branch.
    /// Returns the ids of branches that were newly taken out.
    pub fn remove_bus(&mut self, id: usize) -> Result<Vec<usize>> {
        let bus = self.bus_mut(id).ok_or(Error::UnknownBus(id))?;
        bus.in_service = false;
        let mut tripped = Vec::new();
        for br in &mut self.branches {
            if br.in_service && (br.from_bus == id || br.to_bus == id) {
                br.in_service = false;
                tripped.push(br.id);
            }
        }
        Ok(tripped)
    }

    pub fn remove_branch(&mut self, id: usize) -> Result<()> {
        let br = self
            .branches
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or(Error::UnknownBranch(id))?;
        br.in_service = false;
        Ok(())
    }
}

/// Series admittance of a branch from its impedance: g + jb = 1 / (r + jx).
pub fn branch_admittance(r: f64, x: f64) -> Result<(f64, f64)> {
    let denom = r * r + x * x;
    if denom == 0.0 {
        return Err(Error::ZeroImpedance);
    }
    Ok((r / denom, -x / denom))
}

#[derive(Debug, Clone, Copy)]
pub struct RatingConfig {
    /// Margin applied on top of the base-case flow when a rating is missing.
    pub alpha: f64,
    /// Smallest rating ever assigned, MVA.
    pub floor_mva: f64,
}

impl Default for RatingConfig {
    fn default() -> Self {
        RatingConfig {
            alpha: 1.2,
            floor_mva: 5.0,
        }
    }
}

/// Fills in missing branch ratings from base-case flows.
///
/// Branches that already carry a positive rating keep it. A branch with a
/// missing (zero) rating gets `alpha * base_flow`, floored at `floor_mva`.
/// `base_flow_mva[i]` is the larger-terminal apparent power of `branches[i]`
/// in the solved base case.
pub fn normalize_ratings(
    mut network: PowerNetwork,
    base_flow_mva: &[f64],
    cfg: &RatingConfig,
) -> PowerNetwork {
    assert_eq!(
        network.branches.len(),
        base_flow_mva.len(),
        "one base flow per branch"
    );
    for (br, &flow) in network.branches.iter_mut().zip(base_flow_mva) {
        if br.rating <= 0.0 {
            br.rating = (cfg.alpha * flow).max(cfg.floor_mva);
        }
    }
    network
}
