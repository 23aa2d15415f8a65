//! AC power flow on a single connected island.
//!
//! The solver is a full Newton iteration in polar variables. Unknowns are
//! the angles of all non-slack buses and the voltage magnitudes of all PQ
//! buses; the slack bus provides the angle reference (theta = 0) and absorbs
//! the island imbalance. Non-convergence is a result, not an error: the
//! cascade engine branches on it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{Branch, BusKind, PowerNetwork};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Convergence tolerance on the largest mismatch entry, p.u.
    pub tol: f64,
    pub max_iter: usize,
    /// Start from V = 1 / theta = 0 (setpoints at PV and slack buses)
    /// instead of the case voltage profile.
    pub flat_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 20,
            flat_start: true,
        }
    }
}

/// Power entering a branch at each terminal, p.u.
#[derive(Debug, Clone, Copy)]
pub struct BranchFlow {
    pub branch: usize,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl BranchFlow {
    /// Apparent power at the more loaded terminal, MVA.
    pub fn max_end_mva(&self, base_mva: f64) -> f64 {
        let s_from = self.p_from.hypot(self.q_from);
        let s_to = self.p_to.hypot(self.q_to);
        s_from.max(s_to) * base_mva
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    /// Voltage magnitude per in-service bus id, p.u.
    pub v_mag: BTreeMap<usize, f64>,
    /// Voltage angle per in-service bus id, radians; slack at zero.
    pub v_ang: BTreeMap<usize, f64>,
    /// Flows for every in-service branch of the island.
    pub flows: Vec<BranchFlow>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    fn diverged(max_mismatch: f64) -> Self {
        PowerFlowSolution {
            v_mag: BTreeMap::new(),
            v_ang: BTreeMap::new(),
            flows: Vec::new(),
            converged: false,
            iterations: 0,
            max_mismatch,
        }
    }
}

/// Terminal powers of a pi-model branch with series admittance g + jb and
/// total charging susceptance b_c, given terminal voltages. theta_lm is
/// always theta_l - theta_m.
pub fn line_flow(
    branch: &Branch,
    v_l: f64,
    v_m: f64,
    th_l: f64,
    th_m: f64,
) -> (f64, f64, f64, f64) {
    flow_terms(branch.g, branch.b, branch.b_c, v_l, v_m, th_l, th_m)
}

fn flow_terms(
    g: f64,
    b: f64,
    b_c: f64,
    v_l: f64,
    v_m: f64,
    th_l: f64,
    th_m: f64,
) -> (f64, f64, f64, f64) {
    let th = th_l - th_m;
    let (sin, cos) = th.sin_cos();
    let vv = v_l * v_m;
    let p_lm = g * v_l * v_l - g * vv * cos - b * vv * sin;
    let q_lm = -(b + b_c / 2.0) * v_l * v_l + b * vv * cos - g * vv * sin;
    let p_ml = g * v_m * v_m - g * vv * cos + b * vv * sin;
    let q_ml = -(b + b_c / 2.0) * v_m * v_m + b * vv * cos + g * vv * sin;
    (p_lm, q_lm, p_ml, q_ml)
}

/// An island compiled into index space: in-service buses only, injections in
/// per-unit, branches resolved to bus positions.
struct CompiledIsland {
    bus_ids: Vec<usize>,
    kinds: Vec<BusKind>,
    v_profile: Vec<f64>,
    th_profile: Vec<f64>,
    g_sh: Vec<f64>,
    b_sh: Vec<f64>,
    p_inj: Vec<f64>,
    q_inj: Vec<f64>,
    branches: Vec<(usize, usize, usize, f64, f64, f64)>, // (id, from, to, g, b, b_c)
}

impl CompiledIsland {
    fn new(island: &PowerNetwork) -> Self {
        let mut bus_ids = Vec::new();
        let mut kinds = Vec::new();
        let mut v_profile = Vec::new();
        let mut th_profile = Vec::new();
        let mut g_sh = Vec::new();
        let mut b_sh = Vec::new();
        let mut pos = BTreeMap::new();
        for bus in island.buses.iter().filter(|b| b.in_service) {
            pos.insert(bus.id, bus_ids.len());
            bus_ids.push(bus.id);
            kinds.push(bus.kind);
            v_profile.push(bus.v_mag);
            th_profile.push(bus.v_ang);
            g_sh.push(bus.g_sh);
            b_sh.push(bus.b_sh);
        }
        let n = bus_ids.len();
        let mut p_inj = vec![0.0; n];
        let mut q_inj = vec![0.0; n];
        for gen in island.generators.iter().filter(|g| g.in_service) {
            if let Some(&i) = pos.get(&gen.bus) {
                p_inj[i] += gen.p_set / island.base_mva;
                q_inj[i] += gen.q_set / island.base_mva;
            }
        }
        for load in &island.loads {
            if let Some(&i) = pos.get(&load.bus) {
                p_inj[i] -= load.scale * load.p / island.base_mva;
                q_inj[i] -= load.scale * load.q / island.base_mva;
            }
        }
        let branches = island
            .branches
            .iter()
            .filter(|br| br.in_service)
            .filter_map(|br| {
                let f = *pos.get(&br.from_bus)?;
                let t = *pos.get(&br.to_bus)?;
                Some((br.id, f, t, br.g, br.b, br.b_c))
            })
            .collect();
        CompiledIsland {
            bus_ids,
            kinds,
            v_profile,
            th_profile,
            g_sh,
            b_sh,
            p_inj,
            q_inj,
            branches,
        }
    }

    /// Full per-bus mismatch: scheduled injection minus what the network
    /// equations produce at the given state.
    fn mismatch(&self, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.bus_ids.len();
        let mut dp = vec![0.0; n];
        let mut dq = vec![0.0; n];
        for i in 0..n {
            dp[i] = self.p_inj[i] - self.g_sh[i] * v[i] * v[i];
            dq[i] = self.q_inj[i] + self.b_sh[i] * v[i] * v[i];
        }
        for &(_, l, m, g, b, b_c) in &self.branches {
            let (p_lm, q_lm, p_ml, q_ml) = flow_terms(g, b, b_c, v[l], v[m], th[l], th[m]);
            dp[l] -= p_lm;
            dq[l] -= q_lm;
            dp[m] -= p_ml;
            dq[m] -= q_ml;
        }
        (dp, dq)
    }
}

/// Per-bus power mismatch (dP, dQ) in p.u. at the given voltage state,
/// keyed by bus id. All in-service buses are reported, including the slack
/// and PV buses whose equations the solver leaves out of the residual.
///
/// The voltage maps must contain every in-service bus of the island.
pub fn bus_mismatch(
    island: &PowerNetwork,
    v_mag: &BTreeMap<usize, f64>,
    v_ang: &BTreeMap<usize, f64>,
) -> BTreeMap<usize, (f64, f64)> {
    let compiled = CompiledIsland::new(island);
    let v: Vec<f64> = compiled
        .bus_ids
        .iter()
        .map(|id| *v_mag.get(id).expect("v_mag for every in-service bus"))
        .collect();
    let th: Vec<f64> = compiled
        .bus_ids
        .iter()
        .map(|id| *v_ang.get(id).expect("v_ang for every in-service bus"))
        .collect();
    let (dp, dq) = compiled.mismatch(&v, &th);
    compiled
        .bus_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, (dp[i], dq[i])))
        .collect()
}

/// The Newton system of one island: the solved residual (P equations at
/// non-slack buses, Q equations at PQ buses) and its analytic Jacobian.
///
/// Variable layout: `x = [theta at non-slack buses..., V at PQ buses...]`,
/// both in the order the buses appear in the network. The residual rows use
/// the same ordering.
pub struct NewtonSystem {
    island: CompiledIsland,
    slack: usize,
    theta_vars: Vec<usize>,
    v_vars: Vec<usize>,
}

impl NewtonSystem {
    /// Compiles the island. Fails if the in-service part does not contain
    /// exactly one slack bus.
    pub fn new(island: &PowerNetwork) -> Result<Self> {
        let compiled = CompiledIsland::new(island);
        let slacks: Vec<usize> = compiled
            .kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(Error::SlackCount(slacks.len()));
        }
        let slack = slacks[0];
        let theta_vars: Vec<usize> = (0..compiled.bus_ids.len())
            .filter(|&i| i != slack)
            .collect();
        let v_vars: Vec<usize> = (0..compiled.bus_ids.len())
            .filter(|&i| compiled.kinds[i] == BusKind::Pq)
            .collect();
        Ok(NewtonSystem {
            island: compiled,
            slack,
            theta_vars,
            v_vars,
        })
    }

    pub fn var_count(&self) -> usize {
        self.theta_vars.len() + self.v_vars.len()
    }

    /// Initial variable vector. Flat start means theta = 0 everywhere and
    /// V = 1 at PQ buses; otherwise the case profile is used, with angles
    /// shifted so the slack sits at zero.
    pub fn initial_x(&self, flat_start: bool) -> DVector<f64> {
        let mut x = DVector::zeros(self.var_count());
        if !flat_start {
            let slack_th = self.island.th_profile[self.slack];
            for (k, &i) in self.theta_vars.iter().enumerate() {
                x[k] = self.island.th_profile[i] - slack_th;
            }
            for (k, &i) in self.v_vars.iter().enumerate() {
                x[self.theta_vars.len() + k] = self.island.v_profile[i];
            }
        } else {
            for k in 0..self.v_vars.len() {
                x[self.theta_vars.len() + k] = 1.0;
            }
        }
        x
    }

    /// Expands the variable vector into full (V, theta) state vectors.
    fn state(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = self.island.bus_ids.len();
        // PV and slack magnitudes stay at their regulated values.
        let mut v = self.island.v_profile.clone();
        let mut th = vec![0.0; n];
        th[self.slack] = 0.0;
        for (k, &i) in self.theta_vars.iter().enumerate() {
            th[i] = x[k];
        }
        for (k, &i) in self.v_vars.iter().enumerate() {
            v[i] = x[self.theta_vars.len() + k];
        }
        (v, th)
    }

    /// Solved residual at x: mismatch of the P equations at non-slack buses
    /// followed by the Q equations at PQ buses.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let (v, th) = self.state(x);
        let (dp, dq) = self.island.mismatch(&v, &th);
        let mut r = DVector::zeros(self.var_count());
        for (k, &i) in self.theta_vars.iter().enumerate() {
            r[k] = dp[i];
        }
        for (k, &i) in self.v_vars.iter().enumerate() {
            r[self.theta_vars.len() + k] = dq[i];
        }
        r
    }

    /// Analytic Jacobian of [`NewtonSystem::residual`] with respect to x.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (v, th) = self.state(x);
        let n = self.island.bus_ids.len();
        let n_th = self.theta_vars.len();
        let dim = self.var_count();

        let mut p_row = vec![None; n];
        let mut q_row = vec![None; n];
        let mut th_col = vec![None; n];
        let mut v_col = vec![None; n];
        for (k, &i) in self.theta_vars.iter().enumerate() {
            p_row[i] = Some(k);
            th_col[i] = Some(k);
        }
        for (k, &i) in self.v_vars.iter().enumerate() {
            q_row[i] = Some(n_th + k);
            v_col[i] = Some(n_th + k);
        }

        // Accumulate d(calc)/dx, then negate: residual = injection - calc.
        let mut jac = DMatrix::zeros(dim, dim);
        let mut add = |row: Option<usize>, col: Option<usize>, val: f64| {
            if let (Some(r), Some(c)) = (row, col) {
                jac[(r, c)] += val;
            }
        };

        for i in 0..n {
            add(p_row[i], v_col[i], 2.0 * self.island.g_sh[i] * v[i]);
            add(q_row[i], v_col[i], -2.0 * self.island.b_sh[i] * v[i]);
        }
        for &(_, l, m, g, b, b_c) in &self.island.branches {
            let thlm = th[l] - th[m];
            let (sin, cos) = thlm.sin_cos();
            let (vl, vm) = (v[l], v[m]);
            let vv = vl * vm;
            let b_tot = b + b_c / 2.0;

            // P_lm enters bus l's P equation.
            let dplm_dthl = vv * (g * sin - b * cos);
            add(p_row[l], th_col[l], dplm_dthl);
            add(p_row[l], th_col[m], -dplm_dthl);
            add(p_row[l], v_col[l], 2.0 * g * vl - vm * (g * cos + b * sin));
            add(p_row[l], v_col[m], -vl * (g * cos + b * sin));

            // P_ml enters bus m's P equation.
            let dpml_dthl = vv * (g * sin + b * cos);
            add(p_row[m], th_col[l], dpml_dthl);
            add(p_row[m], th_col[m], -dpml_dthl);
            add(p_row[m], v_col[l], -vm * (g * cos - b * sin));
            add(p_row[m], v_col[m], 2.0 * g * vm - vl * (g * cos - b * sin));

            // Q_lm enters bus l's Q equation.
            let dqlm_dthl = -vv * (b * sin + g * cos);
            add(q_row[l], th_col[l], dqlm_dthl);
            add(q_row[l], th_col[m], -dqlm_dthl);
            add(
                q_row[l],
                v_col[l],
                -2.0 * b_tot * vl + vm * (b * cos - g * sin),
            );
            add(q_row[l], v_col[m], vl * (b * cos - g * sin));

            // Q_ml enters bus m's Q equation.
            let dqml_dthl = vv * (g * cos - b * sin);
            add(q_row[m], th_col[l], dqml_dthl);
            add(q_row[m], th_col[m], -dqml_dthl);
            add(q_row[m], v_col[l], vm * (b * cos + g * sin));
            add(
                q_row[m],
                v_col[m],
                -2.0 * b_tot * vm + vl * (b * cos + g * sin),
            );
        }
        -jac
    }
}

/// Solves the island with Newton iteration.
///
/// Preconditions: the in-service part of `island` is connected and has
/// exactly one slack bus. Divergence, a singular Jacobian, or a voltage
/// collapsing below zero all come back as `converged = false`.
pub fn solve(island: &PowerNetwork, opts: &SolveOptions) -> PowerFlowSolution {
    let sys = match NewtonSystem::new(island) {
        Ok(sys) => sys,
        Err(e) => {
            log::warn!("power flow precondition violated: {e}");
            return PowerFlowSolution::diverged(f64::INFINITY);
        }
    };

    let mut x = sys.initial_x(opts.flat_start);
    let mut iterations = 0;
    let mut converged = false;
    let mut max_mismatch;
    loop {
        let f = sys.residual(&x);
        max_mismatch = f.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if !max_mismatch.is_finite() {
            break;
        }
        if max_mismatch <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let jac = sys.jacobian(&x);
        let step = match jac.lu().solve(&(-&f)) {
            Some(step) if step.iter().all(|v| v.is_finite()) => step,
            _ => break, // singular Jacobian counts as non-convergence
        };
        x += step;
        iterations += 1;
    }

    let (v, th) = sys.state(&x);
    if converged && v.iter().any(|&vi| vi <= 0.0) {
        converged = false;
    }
    if !converged {
        let mut sol = PowerFlowSolution::diverged(max_mismatch);
        sol.iterations = iterations;
        return sol;
    }

    let mut v_mag = BTreeMap::new();
    let mut v_ang = BTreeMap::new();
    for (i, &id) in sys.island.bus_ids.iter().enumerate() {
        v_mag.insert(id, v[i]);
        v_ang.insert(id, th[i]);
    }
    let flows = sys
        .island
        .branches
        .iter()
        .map(|&(id, l, m, g, b, b_c)| {
            let (p_from, q_from, p_to, q_to) = flow_terms(g, b, b_c, v[l], v[m], th[l], th[m]);
            BranchFlow {
                branch: id,
                p_from,
                q_from,
                p_to,
                q_to,
            }
        })
        .collect();
    PowerFlowSolution {
        v_mag,
        v_ang,
        flows,
        converged: true,
        iterations,
        max_mismatch,
    }
}

/// Loading of a branch as a percentage of its MVA rating, using the more
/// loaded terminal.
pub fn branch_loading_percent(flow: &BranchFlow, rating_mva: f64, base_mva: f64) -> Result<f64> {
    if rating_mva <= 0.0 {
        return Err(Error::NonPositiveRating(rating_mva));
    }
    Ok(100.0 * flow.max_end_mva(base_mva) / rating_mva)
}

/// Larger-terminal apparent power per branch of the network, MVA, aligned
/// with `network.branches`. Branches absent from the solution get 0.
pub fn base_flows_mva(network: &PowerNetwork, solution: &PowerFlowSolution) -> Vec<f64> {
    let by_id: BTreeMap<usize, &BranchFlow> =
        solution.flows.iter().map(|f| (f.branch, f)).collect();
    network
        .branches
        .iter()
        .map(|br| {
            by_id
                .get(&br.id)
                .map(|f| f.max_end_mva(network.base_mva))
                .unwrap_or(0.0)
        })
        .collect()
}
