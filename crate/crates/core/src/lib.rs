//! Slot-based simulator for load-balanced VM placement with planned migrations.
//!
//! Start with [`Algorithm::run`] for a single schedule, [`metrics::fleet_metrics`]
//! to score it, and [`experiment::run_experiment`] for repeated runs.

pub mod algorithm;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod offline;
pub mod online;
pub mod oracle;
pub mod validation;
pub mod workload;

pub use domain::*;
pub use error::{Error, Result};
pub use algorithm::{Algorithm, RunParams};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/prepartition.md")]
    mod prepartition {}
    #[doc = include_str!("../../../book/src/online.md")]
    mod online {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/workloads.md")]
    mod workloads {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
