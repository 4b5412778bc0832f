//! Slotted-time data model: reservations, per-PM capacity ledgers, and the
//! schedule every algorithm produces.
//!
//! Capacity is a single normalized scalar per PM. A set of reservations can
//! share a PM as long as their summed demand stays within 1 (plus
//! [`CAPACITY_EPSILON`]) in every slot.

mod ledger;
mod request;
mod schedule;

pub use ledger::{horizon_of, Fleet, Placement, PmState};
pub use request::{
    capacity_makespan, segment_count, split_segment, validate_requests, IdAllocator, SecondaryDemand,
    SlotConfig, VmRequest, CAPACITY_EPSILON,
};
pub use schedule::{
    Assignment, AssignmentRecord, InvariantViolation, Schedule, ScheduleBuilder, ScheduleDocument, SplitRecord,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A VM or PM type from a provider catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub label: String,
    pub compute_units: f64,
    pub memory_gb: f64,
    pub storage_gb: f64,
}

pub type VmCatalogEntry = CatalogEntry;
pub type PmCatalogEntry = CatalogEntry;

impl CatalogEntry {
    pub fn new(label: &str, compute_units: f64, memory_gb: f64, storage_gb: f64) -> Self {
        Self { label: label.to_owned(), compute_units, memory_gb, storage_gb }
    }

    /// Fraction of `pm`'s compute capacity this VM type needs.
    pub fn demand_on(&self, pm: &PmCatalogEntry) -> Result<f64> {
        let demand = self.compute_units / pm.compute_units;
        if demand > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "VM type {} ({} CU) does not fit PM type {} ({} CU)",
                self.label, self.compute_units, pm.label, pm.compute_units
            )));
        }
        Ok(demand)
    }

    pub fn secondary_on(&self, pm: &PmCatalogEntry) -> SecondaryDemand {
        SecondaryDemand {
            memory: self.memory_gb / pm.memory_gb,
            storage: self.storage_gb / pm.storage_gb,
        }
    }
}
