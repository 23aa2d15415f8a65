//! Acceptance suite. Each test prints one pass line when its criterion
//! holds; tolerances are pinned here and nowhere else.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridcascade::cascade::{run_cascade, NodeState, Termination};
use gridcascade::cyber::{build_cyber_topology, CyberMode};
use gridcascade::matpower::parse_case;
use gridcascade::network::{
    branch_admittance, normalize_ratings, Branch, Bus, BusKind, Generator, Load, PowerNetwork,
    RatingConfig,
};
use gridcascade::powerflow::{
    base_flows_mva, bus_mismatch, line_flow, solve, NewtonSystem, SolveOptions,
};
use gridcascade::sweep::{
    derive_run_seed, prepare_network, run_sweep, sample_attack, AttackTarget, SweepConfig,
    SweepResult,
};

fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("cases")
        .join(name)
}

fn load_case(name: &str) -> PowerNetwork {
    let text = std::fs::read_to_string(case_path(name)).unwrap();
    parse_case(&text).unwrap()
}

// ---------------------------------------------------------------------
// Criterion 1: intact-case residuals, conservation, runtime
// ---------------------------------------------------------------------

#[test]
fn criterion_1_power_flow_residuals() {
    const TOL_MISMATCH: f64 = 1e-8;
    const TOL_BALANCE: f64 = 1e-6;
    for name in ["ieee30.m", "ieee118.m", "ieee300.m"] {
        let net = load_case(name);
        let start = Instant::now();
        let sol = solve(&net, &SolveOptions::default());
        let elapsed = start.elapsed();
        assert!(sol.converged, "{name}: no convergence");
        assert!(
            sol.max_mismatch <= TOL_MISMATCH,
            "{name}: mismatch {:.3e}",
            sol.max_mismatch
        );
        assert!(elapsed.as_secs_f64() < 1.0, "{name}: took {elapsed:?}");

        // Active-power balance: generation = load + branch losses + shunts.
        let mm = bus_mismatch(&net, &sol.v_mag, &sol.v_ang);
        let slack = net
            .buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .unwrap()
            .id;
        let mut generation: f64 = net
            .generators
            .iter()
            .filter(|g| g.in_service)
            .map(|g| g.p_set / net.base_mva)
            .sum();
        generation -= mm[&slack].0; // slack absorbs the imbalance
        let demand: f64 = net.loads.iter().map(|l| l.scale * l.p / net.base_mva).sum();
        let losses: f64 = sol.flows.iter().map(|f| f.p_from + f.p_to).sum();
        let shunts: f64 = net
            .buses
            .iter()
            .filter(|b| b.in_service)
            .map(|b| b.g_sh * sol.v_mag[&b.id] * sol.v_mag[&b.id])
            .sum();
        let imbalance = (generation - demand - losses - shunts).abs();
        assert!(
            imbalance <= TOL_BALANCE,
            "{name}: balance off by {imbalance:.3e} p.u."
        );
        println!(
            "criterion 1 [{name}]: PASS (mismatch {:.2e}, balance {:.2e}, {:?})",
            sol.max_mismatch, imbalance, elapsed
        );
    }
}

// ---------------------------------------------------------------------
// Criterion 2: brute-force oracle equivalence on small fixtures
// ---------------------------------------------------------------------

/// The oracle's own residual: complex arithmetic, written independently of
/// the solver's trigonometric route. Returns the largest scheduled-minus-
/// computed component over solved equations (P at non-slack, Q at PQ).
struct OracleNet {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    gens: Vec<Generator>,
    loads: Vec<Load>,
}

impl OracleNet {
    fn from(net: &PowerNetwork) -> Self {
        OracleNet {
            base_mva: net.base_mva,
            buses: net.buses.clone(),
            branches: net.branches.clone(),
            gens: net.generators.clone(),
            loads: net.loads.clone(),
        }
    }

    /// `state[i] = (v, theta)` aligned with `self.buses`.
    fn residual(&self, state: &[(f64, f64)]) -> f64 {
        let volt: Vec<Complex64> = state
            .iter()
            .map(|&(v, th)| Complex64::from_polar(v, th))
            .collect();
        let idx = |bus: usize| self.buses.iter().position(|b| b.id == bus).unwrap();
        let mut injected = vec![Complex64::new(0.0, 0.0); self.buses.len()];
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (l, m) = (idx(br.from_bus), idx(br.to_bus));
            let y = Complex64::new(br.g, br.b);
            let y_sh = Complex64::new(0.0, br.b_c / 2.0);
            let i_lm = y * (volt[l] - volt[m]) + y_sh * volt[l];
            let i_ml = y * (volt[m] - volt[l]) + y_sh * volt[m];
            injected[l] += volt[l] * i_lm.conj();
            injected[m] += volt[m] * i_ml.conj();
        }
        for (i, bus) in self.buses.iter().enumerate() {
            let y_sh = Complex64::new(bus.g_sh, bus.b_sh);
            injected[i] += volt[i] * (y_sh * volt[i]).conj();
        }
        let mut worst = 0.0f64;
        for (i, bus) in self.buses.iter().enumerate() {
            let mut sched = Complex64::new(0.0, 0.0);
            for g in self.gens.iter().filter(|g| g.in_service && g.bus == bus.id) {
                sched += Complex64::new(g.p_set, g.q_set) / self.base_mva;
            }
            for l in self.loads.iter().filter(|l| l.bus == bus.id) {
                sched -= Complex64::new(l.scale * l.p, l.scale * l.q) / self.base_mva;
            }
            let diff = sched - injected[i];
            match bus.kind {
                BusKind::Slack => {}
                BusKind::Pv => worst = worst.max(diff.re.abs()),
                BusKind::Pq => worst = worst.max(diff.re.abs().max(diff.im.abs())),
            }
        }
        worst
    }
}

/// Joint grid search with shrinking boxes over the free (V, theta)
/// variables of PQ buses, restricted to the normal-operation voltage band.
fn grid_search(oracle: &OracleNet, free: &[usize]) -> Vec<(f64, f64)> {
    const POINTS: usize = 9;
    const STAGES: usize = 55;
    let dims = 2 * free.len();
    // Flat variable vector: [V, theta] per free bus.
    let mut center: Vec<f64> = free.iter().flat_map(|_| [0.9, 0.0]).collect();
    let mut half: Vec<f64> = free.iter().flat_map(|_| [0.35, 0.7]).collect();

    let mut state: Vec<(f64, f64)> = oracle.buses.iter().map(|b| (b.v_mag, 0.0)).collect();
    let mut combo = vec![0usize; dims];
    for _stage in 0..STAGES {
        let mut best = f64::INFINITY;
        let mut best_vars = center.clone();
        combo.iter_mut().for_each(|c| *c = 0);
        'grid: loop {
            let vars: Vec<f64> = (0..dims)
                .map(|d| {
                    center[d] - half[d] + 2.0 * half[d] * combo[d] as f64 / (POINTS - 1) as f64
                })
                .collect();
            // even indices are voltage magnitudes: stay on the operating branch
            if vars.iter().step_by(2).all(|&v| v > 0.55) {
                for (slot, &bus_pos) in free.iter().enumerate() {
                    state[bus_pos] = (vars[2 * slot], vars[2 * slot + 1]);
                }
                let r = oracle.residual(&state);
                if r < best {
                    best = r;
                    best_vars = vars;
                }
            }
            // advance the mixed-radix counter
            for digit in combo.iter_mut() {
                *digit += 1;
                if *digit < POINTS {
                    continue 'grid;
                }
                *digit = 0;
            }
            break;
        }
        center = best_vars;
        for h in half.iter_mut() {
            *h *= 0.55;
        }
    }
    for (slot, &bus_pos) in free.iter().enumerate() {
        state[bus_pos] = (center[2 * slot], center[2 * slot + 1]);
    }
    state
}

fn three_bus_fixture() -> PowerNetwork {
    let mk_branch = |id, from, to, r, x, b_c| {
        let (g, b) = branch_admittance(r, x).unwrap();
        Branch {
            id,
            from_bus: from,
            to_bus: to,
            g,
            b,
            b_c,
            rating: 100.0,
            in_service: true,
        }
    };
    PowerNetwork {
        base_mva: 100.0,
        buses: vec![
            Bus {
                id: 1,
                kind: BusKind::Slack,
                v_mag: 1.02,
                v_ang: 0.0,
                g_sh: 0.0,
                b_sh: 0.0,
                in_service: true,
            },
            Bus {
                id: 2,
                kind: BusKind::Pq,
                v_mag: 1.0,
                v_ang: 0.0,
                g_sh: 0.0,
                b_sh: 0.05,
                in_service: true,
            },
            Bus {
                id: 3,
                kind: BusKind::Pq,
                v_mag: 1.0,
                v_ang: 0.0,
                g_sh: 0.01,
                b_sh: 0.0,
                in_service: true,
            },
        ],
        branches: vec![
            mk_branch(0, 1, 2, 0.02, 0.08, 0.04),
            mk_branch(1, 1, 3, 0.03, 0.12, 0.02),
            mk_branch(2, 2, 3, 0.025, 0.1, 0.0),
        ],
        generators: vec![
            Generator {
                bus: 1,
                p_set: 0.0,
                q_set: 0.0,
                p_max: 200.0,
                p_min: 0.0,
                in_service: true,
            },
            Generator {
                bus: 3,
                p_set: 20.0,
                q_set: 5.0,
                p_max: 50.0,
                p_min: 0.0,
                in_service: true,
            },
        ],
        loads: vec![
            Load {
                bus: 2,
                p: 40.0,
                q: 15.0,
                scale: 1.0,
            },
            Load {
                bus: 3,
                p: 30.0,
                q: 10.0,
                scale: 1.0,
            },
        ],
    }
}

fn two_bus_fixture() -> PowerNetwork {
    let (g, b) = branch_admittance(0.0, 0.1).unwrap();
    PowerNetwork {
        base_mva: 100.0,
        buses: vec![
            Bus {
                id: 1,
                kind: BusKind::Slack,
                v_mag: 1.0,
                v_ang: 0.0,
                g_sh: 0.0,
                b_sh: 0.0,
                in_service: true,
            },
            Bus {
                id: 2,
                kind: BusKind::Pq,
                v_mag: 1.0,
                v_ang: 0.0,
                g_sh: 0.0,
                b_sh: 0.0,
                in_service: true,
            },
        ],
        branches: vec![Branch {
            id: 0,
            from_bus: 1,
            to_bus: 2,
            g,
            b,
            b_c: 0.0,
            rating: 100.0,
            in_service: true,
        }],
        generators: vec![Generator {
            bus: 1,
            p_set: 0.0,
            q_set: 0.0,
            p_max: 250.0,
            p_min: 0.0,
            in_service: true,
        }],
        loads: vec![Load {
            bus: 2,
            p: 50.0,
            q: 10.0,
            scale: 1.0,
        }],
    }
}

#[test]
fn criterion_2_oracle_equivalence() {
    const TOL_STATE: f64 = 1e-6;
    const TOL_FLOW: f64 = 1e-12;

    for (name, net, free) in [
        ("2-bus", two_bus_fixture(), vec![1usize]),
        ("3-bus", three_bus_fixture(), vec![1usize, 2]),
    ] {
        let sol = solve(&net, &SolveOptions::default());
        assert!(sol.converged, "{name}: solver did not converge");

        let oracle = OracleNet::from(&net);
        let state = grid_search(&oracle, &free);
        let residual = oracle.residual(&state);
        assert!(
            residual < 1e-8,
            "{name}: oracle search stalled at residual {residual:.3e}"
        );
        for &pos in &free {
            let id = net.buses[pos].id;
            let dv = (sol.v_mag[&id] - state[pos].0).abs();
            let dth = (sol.v_ang[&id] - state[pos].1).abs();
            assert!(
                dv < TOL_STATE && dth < TOL_STATE,
                "{name} bus {id}: dV={dv:.2e} dTh={dth:.2e}"
            );
        }
        println!("criterion 2 [{name} states]: PASS (oracle residual {residual:.2e})");
    }

    // line_flow against an independent complex-arithmetic evaluation
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let g: f64 = rng.gen_range(0.0..30.0);
        let b: f64 = rng.gen_range(-60.0..-0.5);
        let b_c: f64 = rng.gen_range(0.0..0.5);
        let v_l: f64 = rng.gen_range(0.8..1.2);
        let v_m: f64 = rng.gen_range(0.8..1.2);
        let th_l: f64 = rng.gen_range(-0.7..0.7);
        let th_m: f64 = rng.gen_range(-0.7..0.7);
        let branch = Branch {
            id: 0,
            from_bus: 1,
            to_bus: 2,
            g,
            b,
            b_c,
            rating: 1.0,
            in_service: true,
        };
        let (p_lm, q_lm, p_ml, q_ml) = line_flow(&branch, v_l, v_m, th_l, th_m);

        let vl = Complex64::from_polar(v_l, th_l);
        let vm = Complex64::from_polar(v_m, th_m);
        let y = Complex64::new(g, b);
        let ysh = Complex64::new(0.0, b_c / 2.0);
        let s_lm = vl * (y * (vl - vm) + ysh * vl).conj();
        let s_ml = vm * (y * (vm - vl) + ysh * vm).conj();

        let scale = s_lm.norm().max(s_ml.norm()).max(1.0);
        for (a, b) in [
            (p_lm, s_lm.re),
            (q_lm, s_lm.im),
            (p_ml, s_ml.re),
            (q_ml, s_ml.im),
        ] {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    assert!(worst <= TOL_FLOW, "line_flow deviates by {worst:.3e}");
    println!("criterion 2 [line_flow]: PASS (max relative deviation {worst:.2e})");
}

// ---------------------------------------------------------------------
// Criterion 3: analytic Jacobian vs central finite differences
// ---------------------------------------------------------------------

fn random_island(rng: &mut ChaCha8Rng) -> PowerNetwork {
    let n = rng.gen_range(3..=8);
    let mut buses = Vec::new();
    for i in 0..n {
        let kind = if i == 0 {
            BusKind::Slack
        } else if i == 1 && rng.gen_bool(0.4) {
            BusKind::Pv
        } else {
            BusKind::Pq
        };
        buses.push(Bus {
            id: i + 1,
            kind,
            v_mag: rng.gen_range(0.98..1.04),
            v_ang: 0.0,
            g_sh: if rng.gen_bool(0.3) {
                rng.gen_range(0.0..0.05)
            } else {
                0.0
            },
            b_sh: if rng.gen_bool(0.3) {
                rng.gen_range(-0.2..0.2)
            } else {
                0.0
            },
            in_service: true,
        });
    }
    let mut branches = Vec::new();
    // spanning tree first, then a few chords
    for i in 1..n {
        let to = rng.gen_range(0..i);
        let (g, b) = branch_admittance(rng.gen_range(0.0..0.08), rng.gen_range(0.02..0.3)).unwrap();
        branches.push(Branch {
            id: branches.len(),
            from_bus: i + 1,
            to_bus: to + 1,
            g,
            b,
            b_c: rng.gen_range(0.0..0.1),
            rating: 100.0,
            in_service: true,
        });
    }
    for _ in 0..rng.gen_range(0..n) {
        let a = rng.gen_range(0..n);
        let b_i = rng.gen_range(0..n);
        if a == b_i {
            continue;
        }
        let (g, b) = branch_admittance(rng.gen_range(0.0..0.08), rng.gen_range(0.02..0.3)).unwrap();
        branches.push(Branch {
            id: branches.len(),
            from_bus: a + 1,
            to_bus: b_i + 1,
            g,
            b,
            b_c: rng.gen_range(0.0..0.1),
            rating: 100.0,
            in_service: true,
        });
    }
    let mut generators = vec![Generator {
        bus: 1,
        p_set: rng.gen_range(0.0..100.0),
        q_set: 0.0,
        p_max: 200.0,
        p_min: 0.0,
        in_service: true,
    }];
    let mut loads = Vec::new();
    for i in 1..n {
        if rng.gen_bool(0.7) {
            loads.push(Load {
                bus: i + 1,
                p: rng.gen_range(0.0..40.0),
                q: rng.gen_range(-10.0..15.0),
                scale: 1.0,
            });
        }
        if rng.gen_bool(0.2) {
            generators.push(Generator {
                bus: i + 1,
                p_set: rng.gen_range(0.0..50.0),
                q_set: rng.gen_range(-10.0..10.0),
                p_max: 100.0,
                p_min: 0.0,
                in_service: true,
            });
        }
    }
    PowerNetwork {
        base_mva: 100.0,
        buses,
        branches,
        generators,
        loads,
    }
}

#[test]
fn criterion_3_jacobian_matches_finite_differences() {
    const TOL: f64 = 1e-6;
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let net = random_island(&mut rng);
        let sys = NewtonSystem::new(&net).unwrap();
        // random state near nominal, not necessarily solved
        let mut x = sys.initial_x(true);
        for k in 0..x.len() {
            x[k] += rng.gen_range(-0.05..0.05);
        }
        let jac = sys.jacobian(&x);
        for col in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += H;
            xm[col] -= H;
            let fd = (sys.residual(&xp) - sys.residual(&xm)) / (2.0 * H);
            for row in 0..x.len() {
                let denom = fd[row].abs().max(1.0);
                let rel = (jac[(row, col)] - fd[row]).abs() / denom;
                worst = worst.max(rel);
                assert!(
                    rel <= TOL,
                    "trial {trial}: J[{row},{col}] rel err {rel:.3e} \
                     (analytic {} vs fd {})",
                    jac[(row, col)],
                    fd[row]
                );
            }
        }
    }
    println!("criterion 3: PASS (50 islands, worst relative error {worst:.2e})");
}

// ---------------------------------------------------------------------
// Criterion 4: termination and monotonic failure growth
// ---------------------------------------------------------------------

#[test]
fn criterion_4_cascades_terminate_and_grow_monotonically() {
    let net = prepare_network(
        &case_path("ieee30.m"),
        &RatingConfig::default(),
        &SolveOptions::default(),
    )
    .unwrap();
    let mirror = build_cyber_topology(&CyberMode::Mirror, &net, None)
        .unwrap()
        .unwrap();

    for run in 0..500u64 {
        let k = 1 + (run % 5) as usize;
        let target = if run % 2 == 0 {
            AttackTarget::Buses
        } else {
            AttackTarget::Branches
        };
        let cyber = if run % 4 < 2 { None } else { Some(&mirror) };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_run_seed(404, k as u64, run));
        let attack = sample_attack(&mut rng, k, target, &net).unwrap();
        let (buses, branches): (&[usize], &[usize]) = match target {
            AttackTarget::Buses => (&attack, &[]),
            AttackTarget::Branches => (&[], &attack),
        };
        let outcome = run_cascade(&net, cyber, buses, branches, &SolveOptions::default()).unwrap();
        assert_eq!(
            outcome.termination,
            Termination::Stopped,
            "run {run} hit the safety cap"
        );

        let mut prev_power: BTreeSet<usize> = BTreeSet::new();
        let mut prev_cyber: BTreeSet<usize> = BTreeSet::new();
        for snap in &outcome.state.phase_log {
            let failed_power: BTreeSet<usize> = snap
                .power
                .nodes
                .iter()
                .filter(|(_, s)| matches!(s, NodeState::Failed))
                .map(|(id, _)| *id)
                .collect();
            assert!(
                failed_power.is_superset(&prev_power),
                "run {run}: power failures shrank at it{} {}",
                snap.iteration,
                snap.phase
            );
            prev_power = failed_power;
            if let Some(cy) = &snap.cyber {
                let failed_cyber: BTreeSet<usize> = cy
                    .nodes
                    .iter()
                    .filter(|(_, s)| matches!(s, NodeState::Failed))
                    .map(|(id, _)| *id)
                    .collect();
                assert!(
                    failed_cyber.is_superset(&prev_cyber),
                    "run {run}: cyber failures shrank"
                );
                prev_cyber = failed_cyber;
            }
        }
    }
    println!("criterion 4: PASS (500 random attacks, no cap hits, monotone logs)");
}

// ---------------------------------------------------------------------
// Criteria 5 and 6: desk-scale blackout-probability sweeps
// ---------------------------------------------------------------------

const SWEEP_RUNS: usize = 200;
const SWEEP_SEED: u64 = 52;

fn sweep_pair() -> &'static (SweepResult, SweepResult) {
    static PAIR: OnceLock<(SweepResult, SweepResult)> = OnceLock::new();
    PAIR.get_or_init(|| {
        let base = SweepConfig {
            case: case_path("ieee30.m"),
            cyber: CyberMode::None,
            coords: None,
            target: AttackTarget::Buses,
            k_min: 1,
            k_max: 10,
            runs: SWEEP_RUNS,
            seed: SWEEP_SEED,
            solver: SolveOptions::default(),
            rating: RatingConfig::default(),
        };
        let none = run_sweep(&base).unwrap();
        let mirror = run_sweep(&SweepConfig {
            cyber: CyberMode::Mirror,
            ..base
        })
        .unwrap();
        (none, mirror)
    })
}

fn smoothed(probabilities: &[f64]) -> Vec<f64> {
    // centered 3-point moving average, truncated at the ends
    (0..probabilities.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(probabilities.len() - 1);
            probabilities[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

#[test]
fn criterion_5_blackout_probability_rises_with_attack_size() {
    let start = Instant::now();
    let (none, _) = sweep_pair();
    let probs: Vec<f64> = none.rows.iter().map(|r| r.probability).collect();
    let hw: Vec<f64> = none.rows.iter().map(|r| r.ci95).collect();
    let smooth = smoothed(&probs);
    for i in 0..smooth.len() - 1 {
        let slack = hw[i].max(hw[i + 1]);
        assert!(
            smooth[i + 1] >= smooth[i] - slack,
            "smoothed probability drops from k={} ({:.3}) to k={} ({:.3}) beyond {:.3}",
            none.rows[i].k,
            smooth[i],
            none.rows[i + 1].k,
            smooth[i + 1],
            slack
        );
    }
    assert!(
        start.elapsed().as_secs() < 300,
        "sweep took {:?}",
        start.elapsed()
    );
    println!(
        "criterion 5: PASS (probabilities {:?})",
        probs
            .iter()
            .map(|p| (p * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
}

#[test]
fn criterion_6_cyber_coupling_never_softens_blackouts() {
    let (none, mirror) = sweep_pair();
    for (n_row, m_row) in none.rows.iter().zip(&mirror.rows) {
        assert_eq!(n_row.k, m_row.k);
        let slack = n_row.ci95.max(m_row.ci95);
        assert!(
            m_row.probability >= n_row.probability - slack,
            "k={}: mirror {:.3} vs none {:.3} (slack {:.3})",
            n_row.k,
            m_row.probability,
            n_row.probability,
            slack
        );
    }
    println!(
        "criterion 6: PASS (mirror {:?} vs none {:?})",
        mirror
            .rows
            .iter()
            .map(|r| (r.probability * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        none.rows
            .iter()
            .map(|r| (r.probability * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
}

// ---------------------------------------------------------------------
// Criterion 7: nonlocal propagation on the 118-bus case
// ---------------------------------------------------------------------

#[test]
fn criterion_7_failures_propagate_nonlocally() {
    let net = prepare_network(
        &case_path("ieee118.m"),
        &RatingConfig::default(),
        &SolveOptions::default(),
    )
    .unwrap();

    let mut nonlocal_runs = 0usize;
    for run in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_run_seed(707, 2, run));
        let attack = sample_attack(&mut rng, 2, AttackTarget::Branches, &net).unwrap();
        let outcome = run_cascade(&net, None, &[], &attack, &SolveOptions::default()).unwrap();

        let attacked_endpoints: BTreeSet<usize> = attack
            .iter()
            .flat_map(|&id| {
                let br = net.branch(id).unwrap();
                [br.from_bus, br.to_bus]
            })
            .collect();
        let nonlocal = outcome
            .state
            .failed_power_branches
            .iter()
            .filter(|id| !attack.contains(id))
            .any(|&id| {
                let br = net.branch(id).unwrap();
                !attacked_endpoints.contains(&br.from_bus)
                    && !attacked_endpoints.contains(&br.to_bus)
            });
        if nonlocal {
            nonlocal_runs += 1;
        }
    }
    assert!(
        nonlocal_runs >= 1,
        "no run tripped a branch non-adjacent to the attack"
    );
    println!("criterion 7: PASS ({nonlocal_runs}/200 runs propagated nonlocally)");
}

// ---------------------------------------------------------------------
// Criterion 8: assignment equals permutation brute force (n <= 8)
// ---------------------------------------------------------------------

#[test]
fn criterion_8_assignment_matches_brute_force() {
    use gridcascade::assignment::{assign_coupling, min_cost_assignment};

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        let mut perms: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::new();
            for p in &perms {
                for j in 0..n {
                    if !p.contains(&j) {
                        let mut q = p.clone();
                        q.push(j);
                        next.push(q);
                    }
                }
            }
            perms = next;
        }
        perms
    }

    let mut rng = ChaCha8Rng::seed_from_u64(888);
    for instance in 0..100 {
        let n = rng.gen_range(2..=8);
        let power: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)))
            .collect();
        let cyber: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)))
            .collect();
        let cost: Vec<Vec<f64>> = power
            .iter()
            .map(|&(px, py)| {
                cyber
                    .iter()
                    .map(|&(cx, cy)| (px - cx).hypot(py - cy))
                    .collect()
            })
            .collect();

        let mut best_cost = f64::INFINITY;
        let mut best = Vec::new();
        for perm in permutations(n) {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            if c < best_cost {
                best_cost = c;
                best = perm;
            }
        }

        let fast = assign_coupling(&cyber, &power).unwrap();
        assert_eq!(fast, best, "instance {instance} (n={n}) differs");
        assert_eq!(fast, min_cost_assignment(&cost), "routes disagree");
    }
    println!("criterion 8: PASS (100 instances up to n=8)");
}

// ---------------------------------------------------------------------
// Criterion 9: bit-identical sweeps at any parallelism level
// ---------------------------------------------------------------------

#[test]
fn criterion_9_sweeps_are_bit_identical() {
    let config = SweepConfig {
        case: case_path("ieee30.m"),
        cyber: CyberMode::Mirror,
        coords: None,
        target: AttackTarget::Branches,
        k_min: 1,
        k_max: 4,
        runs: 40,
        seed: 99,
        solver: SolveOptions::default(),
        rating: RatingConfig::default(),
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_sweep(&config).unwrap());
    let multi = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap()
        .install(|| run_sweep(&config).unwrap());
    let again = run_sweep(&config).unwrap();
    assert_eq!(single.to_csv(), multi.to_csv());
    assert_eq!(single.to_csv(), again.to_csv());
    println!("criterion 9: PASS (1-thread, 8-thread and default runs agree byte for byte)");
}

// ---------------------------------------------------------------------
// Supporting checks tied to acceptance data paths
// ---------------------------------------------------------------------

#[test]
fn published_cases_parse_to_expected_sizes() {
    let net30 = load_case("ieee30.m");
    assert_eq!(net30.buses.len(), 30);
    assert_eq!(net30.branches.len(), 41);
    let net118 = load_case("ieee118.m");
    assert_eq!(net118.buses.len(), 118);
    let net300 = load_case("ieee300.m");
    assert_eq!(net300.buses.len(), 300);
}

#[test]
fn round_trip_of_published_cases_is_field_exact() {
    for name in ["ieee30.m", "ieee118.m", "ieee300.m"] {
        let net = load_case(name);
        let json = gridcascade::matpower::to_json(&net);
        let back = parse_case(&json).unwrap();
        assert_eq!(net, back, "{name} round trip");
    }
}

#[test]
fn rating_normalization_on_cases_is_idempotent() {
    let net = load_case("ieee118.m");
    let sol = solve(&net, &SolveOptions::default());
    assert!(sol.converged);
    let flows = base_flows_mva(&net, &sol);
    let once = normalize_ratings(net, &flows, &RatingConfig::default());
    let twice = normalize_ratings(once.clone(), &flows, &RatingConfig::default());
    assert_eq!(once, twice);
    assert!(once.branches.iter().all(|b| b.rating > 0.0));
}

#[test]
fn cyber_fixture_for_118_loads_with_valid_coupling() {
    let net = load_case("ieee118.m");
    let coords_text = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/ieee118.coords"),
    )
    .unwrap();
    let coords = gridcascade::cyber::parse_coords(&coords_text).unwrap();
    let cyber = build_cyber_topology(
        &CyberMode::File(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/cyber118.edges")),
        &net,
        Some(&coords),
    )
    .unwrap()
    .unwrap();
    assert_eq!(cyber.node_count(), 118);
    assert_eq!(cyber.edges.len(), 178);
    // one-to-one coupling over all nodes
    let mut nodes: Vec<usize> = cyber.power_to_cyber.values().copied().collect();
    nodes.sort_unstable();
    assert_eq!(nodes, (0..118).collect::<Vec<_>>());
    for (&bus, &node) in &cyber.power_to_cyber {
        assert_eq!(cyber.cyber_to_power[node], bus);
    }
    // the fixture topology is connected, so nothing is pruned
    let mut working = cyber.clone();
    assert!(gridcascade::cyber::giant_component_prune(&mut working).is_empty());
}

#[test]
fn mirror_mode_on_the_30_bus_case_copies_the_topology() {
    let net = load_case("ieee30.m");
    let cyber = build_cyber_topology(&CyberMode::Mirror, &net, None)
        .unwrap()
        .unwrap();
    assert_eq!(cyber.node_count(), 30);
    assert_eq!(cyber.edges.len(), 41, "one edge per in-service branch");
}
