use std::io;

use thiserror::Error;

/// Errors reported by the library.
///
/// Capacity infeasibility is never an error: schedulers record unplaceable
/// requests in [`Schedule::rejected`](crate::Schedule::rejected) instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid request {id}: {reason}")]
    InvalidRequest { id: u64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0} requires at least one request")]
    EmptyInput(&'static str),

    #[error("measurement window [{start}, {end}) is empty or outside the horizon")]
    EmptyWindow { start: u32, end: u32 },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("instance too large for exhaustive search: {pms}^{requests} assignments exceeds {limit}")]
    InstanceTooLarge { pms: usize, requests: usize, limit: u64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
