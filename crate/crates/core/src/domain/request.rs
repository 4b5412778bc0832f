use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on every per-slot capacity sum.
pub const CAPACITY_EPSILON: f64 = 1e-9;

/// Discretization of the simulated time span into equal slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotConfig {
    pub slot_length_minutes: u32,
    pub horizon_slots: u32,
}

impl SlotConfig {
    pub fn new(slot_length_minutes: u32, horizon_slots: u32) -> Result<Self> {
        if slot_length_minutes == 0 {
            return Err(Error::InvalidConfig("slot length must be at least one minute".into()));
        }
        if horizon_slots == 0 {
            return Err(Error::InvalidConfig("horizon must contain at least one slot".into()));
        }
        Ok(Self { slot_length_minutes, horizon_slots })
    }

    pub fn slot_seconds(&self) -> u64 {
        u64::from(self.slot_length_minutes) * 60
    }

    /// Wall-clock minutes covered by `slots` slots.
    pub fn minutes(&self, slots: u32) -> u64 {
        u64::from(slots) * u64::from(self.slot_length_minutes)
    }
}

impl Default for SlotConfig {
    fn default() -> Self {
        // five-minute slots over four weeks
        Self { slot_length_minutes: 5, horizon_slots: 8064 }
    }
}

/// A reservation `[start_slot, end_slot)` asking for a fixed fraction of one
/// physical machine. Segments produced by partitioning carry the id of the
/// request they were cut from in `parent_id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VmRequest {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<u64>,
    #[serde(default)]
    pub vm_type: Option<String>,
    pub start_slot: u32,
    pub end_slot: u32,
    pub demand: f64,
    /// Memory and storage fractions, consulted only by fleets built with the
    /// secondary-resource gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<SecondaryDemand>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondaryDemand {
    pub memory: f64,
    pub storage: f64,
}

impl VmRequest {
    /// Builds a validated request.
    pub fn new(id: u64, start_slot: u32, end_slot: u32, demand: f64) -> Result<Self> {
        let req = Self {
            id,
            parent_id: None,
            vm_type: None,
            start_slot,
            end_slot,
            demand,
            secondary: None,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_vm_type(mut self, vm_type: impl Into<String>) -> Self {
        self.vm_type = Some(vm_type.into());
        self
    }

    pub fn with_secondary(mut self, secondary: SecondaryDemand) -> Self {
        self.secondary = Some(secondary);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidRequest { id: self.id, reason };
        if self.start_slot >= self.end_slot {
            return Err(invalid(format!(
                "start slot {} must precede end slot {}",
                self.start_slot, self.end_slot
            )));
        }
        if !(self.demand > 0.0 && self.demand <= 1.0) {
            return Err(invalid(format!("demand {} outside (0, 1]", self.demand)));
        }
        if let Some(s) = self.secondary {
            if !(0.0..=1.0).contains(&s.memory) || !(0.0..=1.0).contains(&s.storage) {
                return Err(invalid("secondary demand outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn duration_slots(&self) -> u32 {
        self.end_slot - self.start_slot
    }

    pub fn capacity_makespan(&self) -> f64 {
        capacity_makespan(self)
    }

    /// Id of the original reservation this request belongs to.
    pub fn root_id(&self) -> u64 {
        self.parent_id.unwrap_or(self.id)
    }

    pub fn is_segment(&self) -> bool {
        self.parent_id.is_some()
    }
}

/// Demand times duration, in capacity-slots.
pub fn capacity_makespan(seg: &VmRequest) -> f64 {
    seg.demand * f64::from(seg.duration_slots())
}

/// Validates a batch of requests and checks that ids are unique.
pub fn validate_requests(requests: &[VmRequest]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(requests.len());
    for r in requests {
        r.validate()?;
        if !seen.insert(r.id) {
            return Err(Error::InvalidRequest { id: r.id, reason: "duplicate id".into() });
        }
    }
    Ok(())
}

/// Hands out fresh ids for segments, above every id already in use.
#[derive(Clone, Debug)]
pub struct IdAllocator {
    next: u64,
}

impl IdAllocator {
    pub fn above(requests: &[VmRequest]) -> Self {
        let next = requests.iter().map(|r| r.id).max().map_or(0, |m| m + 1);
        Self { next }
    }

    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }
}

/// Number of segments `split_segment` produces for `req` under `max_cm`.
///
/// Starts from `ceil(cm / max_cm)`. When integer slot rounding would leave the
/// longest segment above `max_cm`, the count grows until it fits. Never more
/// segments than slots.
pub fn segment_count(req: &VmRequest, max_cm: f64) -> usize {
    let duration = req.duration_slots() as usize;
    let cm = req.capacity_makespan();
    if max_cm <= 0.0 || cm <= max_cm {
        return 1;
    }
    let mut n = ((cm / max_cm) - CAPACITY_EPSILON).ceil().max(1.0) as usize;
    let slots_per_segment = (max_cm / req.demand + CAPACITY_EPSILON).floor() as usize;
    if slots_per_segment >= 1 {
        n = n.max(duration.div_ceil(slots_per_segment));
    } else {
        n = duration;
    }
    n.clamp(1, duration)
}

/// Cuts `req` into contiguous, equal-as-possible segments whose capacity
/// makespan does not exceed `max_cm` (unless a single slot already does).
///
/// Longer segments come first. A request that needs no cut comes back as a
/// single unchanged element.
pub fn split_segment(req: &VmRequest, max_cm: f64, ids: &mut IdAllocator) -> Vec<VmRequest> {
    let n = segment_count(req, max_cm);
    if n <= 1 {
        return vec![req.clone()];
    }
    let duration = req.duration_slots() as usize;
    let base = duration / n;
    let longer = duration % n;
    let mut start = req.start_slot;
    (0..n)
        .map(|i| {
            let len = (base + usize::from(i < longer)) as u32;
            let seg = VmRequest {
                id: ids.next_id(),
                parent_id: Some(req.root_id()),
                vm_type: req.vm_type.clone(),
                start_slot: start,
                end_slot: start + len,
                demand: req.demand,
                secondary: req.secondary,
            };
            start += len;
            seg
        })
        .collect()
}
