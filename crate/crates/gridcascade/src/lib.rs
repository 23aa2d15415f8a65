//! Cascading-failure simulation for interdependent cyber-physical power
//! grids.
//!
//! The crate models a transmission grid coupled one-to-one with a cyber
//! network. An initial attack takes buses or branches out of service; the
//! failure then propagates in alternating phases: AC power-flow driven
//! overload tripping and island shedding on the power side (phase A),
//! power-to-cyber coupling (B), giant-component pruning of the cyber graph
//! (C), and cyber-to-power coupling (D), until neither layer loses anything
//! new. A Monte-Carlo harness aggregates blackout probabilities over random
//! attacks of growing size.

pub mod assignment;
pub mod cascade;
pub mod cli;
pub mod cyber;
pub mod error;
pub mod islands;
pub mod matpower;
pub mod network;
pub mod powerflow;
pub mod sweep;

#[cfg(test)]
pub(crate) mod testfix;

pub use error::{Error, Result};
pub use network::{Branch, Bus, BusKind, Generator, Load, PowerNetwork, RatingConfig};
pub use powerflow::{PowerFlowSolution, SolveOptions};
