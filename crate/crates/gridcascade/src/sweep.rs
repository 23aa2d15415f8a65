//! Monte-Carlo attack sweeps: blackout probability as a function of the
//! initial attack size.
//!
//! Every run gets its own seed derived from (master seed, k, run index), so
//! results are reproducible bit for bit regardless of how many runs execute
//! or how they are scheduled across threads.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cascade::{run_cascade, Termination};
use crate::cyber::{build_cyber_topology, parse_coords, CyberMode, CyberNetwork};
use crate::error::{Error, Result};
use crate::matpower::parse_case;
use crate::network::{normalize_ratings, PowerNetwork, RatingConfig};
use crate::powerflow::{base_flows_mva, solve, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackTarget {
    Buses,
    Branches,
}

impl std::str::FromStr for AttackTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "buses" => Ok(AttackTarget::Buses),
            "branches" => Ok(AttackTarget::Branches),
            other => Err(Error::Flag {
                flag: "--target",
                msg: format!("expected buses or branches, got `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub case: PathBuf,
    pub cyber: CyberMode,
    /// Power coordinates sidecar, only relevant for file-mode coupling.
    pub coords: Option<PathBuf>,
    pub target: AttackTarget,
    pub k_min: usize,
    pub k_max: usize,
    pub runs: usize,
    pub seed: u64,
    pub solver: SolveOptions,
    pub rating: RatingConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KStat {
    pub k: usize,
    pub runs: usize,
    pub blackouts: usize,
    pub probability: f64,
    /// Half-width of the 95% normal-approximation confidence interval.
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<KStat>,
}

impl SweepResult {
    /// Fixed-format CSV: `k,runs,blackouts,probability,ci95`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,runs,blackouts,probability,ci95\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                row.k, row.runs, row.blackouts, row.probability, row.ci95
            ));
        }
        out
    }
}

/// Uniform sample of k distinct in-service component ids, without
/// replacement. Returned sorted.
pub fn sample_attack(
    rng: &mut ChaCha8Rng,
    k: usize,
    target: AttackTarget,
    network: &PowerNetwork,
) -> Result<Vec<usize>> {
    let population: Vec<usize> = match target {
        AttackTarget::Buses => network
            .buses
            .iter()
            .filter(|b| b.in_service)
            .map(|b| b.id)
            .collect(),
        AttackTarget::Branches => network
            .branches
            .iter()
            .filter(|b| b.in_service)
            .map(|b| b.id)
            .collect(),
    };
    if k > population.len() {
        return Err(Error::AttackTooLarge {
            k,
            population: population.len(),
        });
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, population.len(), k)
        .into_iter()
        .map(|i| population[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Seed for one (k, run) cell, mixed from the master seed with a SplitMix64
/// finalizer. Independent of how many runs or k values a sweep covers.
pub fn derive_run_seed(master: u64, k: u64, run: u64) -> u64 {
    let mut z =
        master ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ run.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loads a case, solves the intact base flow, and fills in missing branch
/// ratings. This is the preparation every cascade shares.
pub fn prepare_network(
    case_path: &PathBuf,
    rating: &RatingConfig,
    solver: &SolveOptions,
) -> Result<PowerNetwork> {
    let text = std::fs::read_to_string(case_path).map_err(|e| Error::io(case_path, e))?;
    let net = parse_case(&text)?;
    let base = solve(&net, solver);
    if !base.converged {
        return Err(Error::BaseCaseDiverged);
    }
    let flows = base_flows_mva(&net, &base);
    Ok(normalize_ratings(net, &flows, rating))
}

fn build_cyber(config: &SweepConfig, net: &PowerNetwork) -> Result<Option<CyberNetwork>> {
    let coords = match &config.coords {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(parse_coords(&text)?)
        }
        None => None,
    };
    build_cyber_topology(&config.cyber, net, coords.as_deref())
}

/// Runs the full sweep: for every k in the configured range, `runs`
/// independent random attacks, each a complete cascade. Blackout counts
/// aggregate into per-k probabilities with 95% half-widths.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    let net = prepare_network(&config.case, &config.rating, &config.solver)?;
    let cyber = build_cyber(config, &net)?;

    let mut rows = Vec::with_capacity(config.k_max.saturating_sub(config.k_min) + 1);
    for k in config.k_min..=config.k_max {
        let blackouts = (0..config.runs)
            .into_par_iter()
            .map(|run| -> Result<usize> {
                let seed = derive_run_seed(config.seed, k as u64, run as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let attack = sample_attack(&mut rng, k, config.target, &net)?;
                let (buses, branches): (&[usize], &[usize]) = match config.target {
                    AttackTarget::Buses => (&attack, &[]),
                    AttackTarget::Branches => (&[], &attack),
                };
                let outcome = run_cascade(&net, cyber.as_ref(), buses, branches, &config.solver)?;
                if outcome.termination == Termination::SafetyCap {
                    return Err(Error::SafetyCap(outcome.state.iteration));
                }
                Ok(outcome.blackout as usize)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let probability = blackouts as f64 / config.runs as f64;
        let ci95 = 1.96 * (probability * (1.0 - probability) / config.runs as f64).sqrt();
        rows.push(KStat {
            k,
            runs: config.runs,
            blackouts,
            probability,
            ci95,
        });
    }
    Ok(SweepResult { rows })
}
