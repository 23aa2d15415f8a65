use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{table} row {row} references nonexistent bus {bus}")]
    UnknownBusRef {
        table: &'static str,
        row: usize,
        bus: usize,
    },

    #[error("unknown bus id {0}")]
    UnknownBus(usize),

    #[error("unknown branch id {0}")]
    UnknownBranch(usize),

    #[error("zero-impedance branch (r = x = 0)")]
    ZeroImpedance,

    #[error("island has {0} slack buses, expected exactly one")]
    SlackCount(usize),

    #[error("branch rating must be positive, got {0}")]
    NonPositiveRating(f64),

    #[error(
        "cyber edge list references node {node}, but the power network has only {bus_count} buses"
    )]
    CyberNodeOutOfRange { node: usize, bus_count: usize },

    #[error("coordinate sets differ in size: {0} vs {1}")]
    CoordCountMismatch(usize, usize),

    #[error("missing coordinates for {0} id {1}")]
    MissingCoordinates(&'static str, usize),

    #[error("attack size {k} exceeds the {population} in-service candidates")]
    AttackTooLarge { k: usize, population: usize },

    #[error("base-case power flow did not converge; cannot normalize ratings")]
    BaseCaseDiverged,

    #[error("cascade exceeded the safety cap of {0} outer iterations")]
    SafetyCap(u32),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid flag value for {flag}: {msg}")]
    Flag { flag: &'static str, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
