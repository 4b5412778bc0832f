use std::collections::BTreeSet;

use ordered_float::OrderedFloat;
use serde::Serialize;

use super::request::{VmRequest, CAPACITY_EPSILON};

/// A request (or segment) hosted by a PM.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Placement {
    pub request_id: u64,
    pub start_slot: u32,
    pub end_slot: u32,
    pub demand: f64,
}

impl Placement {
    pub fn capacity_makespan(&self) -> f64 {
        self.demand * f64::from(self.end_slot - self.start_slot)
    }
}

/// Per-slot capacity ledger of one physical machine.
///
/// Capacity is normalized to 1. `load_cm` is maintained incrementally and
/// always equals the summed capacity makespan of `assigned`.
#[derive(Clone, Debug)]
pub struct PmState {
    id: usize,
    slot_usage: Vec<f64>,
    secondary_usage: Option<Vec<[f64; 2]>>,
    load_cm: f64,
    assigned: Vec<Placement>,
}

impl PmState {
    pub fn new(id: usize, horizon_slots: u32) -> Self {
        Self {
            id,
            slot_usage: vec![0.0; horizon_slots as usize],
            secondary_usage: None,
            load_cm: 0.0,
            assigned: Vec::new(),
        }
    }

    /// Also tracks memory and storage fractions and refuses placements that
    /// overflow either of them.
    pub fn with_secondary_gate(mut self) -> Self {
        self.secondary_usage = Some(vec![[0.0; 2]; self.slot_usage.len()]);
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn horizon_slots(&self) -> u32 {
        self.slot_usage.len() as u32
    }

    pub fn slot_usage(&self) -> &[f64] {
        &self.slot_usage
    }

    pub fn usage(&self, slot: u32) -> f64 {
        self.slot_usage.get(slot as usize).copied().unwrap_or(0.0)
    }

    pub fn load_cm(&self) -> f64 {
        self.load_cm
    }

    pub fn assigned(&self) -> &[Placement] {
        &self.assigned
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    /// Load recomputed from scratch out of `assigned`.
    pub fn recompute_load_cm(&self) -> f64 {
        self.assigned.iter().map(Placement::capacity_makespan).sum()
    }

    /// First start and last end over hosted requests.
    pub fn busy_span(&self) -> Option<(u32, u32)> {
        let first = self.assigned.iter().map(|p| p.start_slot).min()?;
        let last = self.assigned.iter().map(|p| p.end_slot).max()?;
        Some((first, last))
    }

    pub fn fits(&self, seg: &VmRequest) -> bool {
        let (start, end) = (seg.start_slot as usize, seg.end_slot as usize);
        if end > self.slot_usage.len() {
            return false;
        }
        let cpu_ok = self.slot_usage[start..end]
            .iter()
            .all(|&u| u + seg.demand <= 1.0 + CAPACITY_EPSILON);
        if !cpu_ok {
            return false;
        }
        match (&self.secondary_usage, seg.secondary) {
            (Some(usage), Some(need)) => usage[start..end].iter().all(|[mem, sto]| {
                mem + need.memory <= 1.0 + CAPACITY_EPSILON
                    && sto + need.storage <= 1.0 + CAPACITY_EPSILON
            }),
            _ => true,
        }
    }

    /// Places `seg` if every slot it covers has room; leaves the ledger
    /// untouched otherwise.
    pub fn try_place(&mut self, seg: &VmRequest) -> bool {
        if !self.fits(seg) {
            return false;
        }
        self.commit(seg);
        true
    }

    /// Records `seg` without the capacity check. Only for fault injection in
    /// the validation harness.
    pub(crate) fn force_place(&mut self, seg: &VmRequest) {
        let needed = seg.end_slot as usize;
        if needed > self.slot_usage.len() {
            self.slot_usage.resize(needed, 0.0);
        }
        self.commit(seg);
    }

    fn commit(&mut self, seg: &VmRequest) {
        let range = seg.start_slot as usize..seg.end_slot as usize;
        for u in &mut self.slot_usage[range.clone()] {
            *u += seg.demand;
        }
        if let (Some(usage), Some(need)) = (&mut self.secondary_usage, seg.secondary) {
            for [mem, sto] in &mut usage[range] {
                *mem += need.memory;
                *sto += need.storage;
            }
        }
        self.load_cm += seg.capacity_makespan();
        self.assigned.push(Placement {
            request_id: seg.id,
            start_slot: seg.start_slot,
            end_slot: seg.end_slot,
            demand: seg.demand,
        });
    }

    /// Removes a hosted request and releases its slots.
    pub fn remove(&mut self, request_id: u64, secondary: Option<super::SecondaryDemand>) -> Option<Placement> {
        let pos = self.assigned.iter().position(|p| p.request_id == request_id)?;
        let p = self.assigned.remove(pos);
        let range = p.start_slot as usize..p.end_slot as usize;
        for u in &mut self.slot_usage[range.clone()] {
            *u = (*u - p.demand).max(0.0);
        }
        if let (Some(usage), Some(need)) = (&mut self.secondary_usage, secondary) {
            for [mem, sto] in &mut usage[range] {
                *mem = (*mem - need.memory).max(0.0);
                *sto = (*sto - need.storage).max(0.0);
            }
        }
        self.load_cm = if self.assigned.is_empty() {
            0.0
        } else {
            self.load_cm - p.capacity_makespan()
        };
        Some(p)
    }

    /// Highest per-slot usage on this PM.
    pub fn peak_usage(&self) -> f64 {
        self.slot_usage.iter().copied().fold(0.0, f64::max)
    }
}

/// A fleet of PMs indexed by current load, so the least-loaded PM that can
/// host a segment is found by walking an ordered set.
///
/// Ties on load go to the lowest PM index.
#[derive(Clone, Debug)]
pub struct Fleet {
    pms: Vec<PmState>,
    by_load: BTreeSet<(OrderedFloat<f64>, usize)>,
}

impl Fleet {
    pub fn new(pm_count: usize, horizon_slots: u32) -> Self {
        let pms = (0..pm_count).map(|i| PmState::new(i, horizon_slots)).collect();
        Self::from_pms(pms)
    }

    /// Fleet whose horizon covers every request. The memory/storage gate is
    /// switched on when any request carries secondary demands.
    pub fn for_requests(requests: &[VmRequest], pm_count: usize) -> Self {
        let fleet = Self::new(pm_count, horizon_of(requests));
        if requests.iter().any(|r| r.secondary.is_some()) {
            fleet.with_secondary_gate()
        } else {
            fleet
        }
    }

    pub fn from_pms(pms: Vec<PmState>) -> Self {
        let by_load = pms.iter().map(|p| (OrderedFloat(p.load_cm()), p.id())).collect();
        Self { pms, by_load }
    }

    pub fn with_secondary_gate(self) -> Self {
        Self::from_pms(self.pms.into_iter().map(PmState::with_secondary_gate).collect())
    }

    pub fn len(&self) -> usize {
        self.pms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pms.is_empty()
    }

    pub fn pm(&self, id: usize) -> &PmState {
        &self.pms[id]
    }

    pub fn pms(&self) -> &[PmState] {
        &self.pms
    }

    pub fn into_pms(self) -> Vec<PmState> {
        self.pms
    }

    /// PM ids in ascending (load, id) order.
    pub fn by_load(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_load.iter().map(|&(_, id)| id)
    }

    pub fn lowest_feasible(&self, seg: &VmRequest) -> Option<usize> {
        self.by_load().find(|&id| self.pms[id].fits(seg))
    }

    pub fn feasible(&self, seg: &VmRequest) -> Vec<usize> {
        (0..self.pms.len()).filter(|&id| self.pms[id].fits(seg)).collect()
    }

    /// Places `seg` on the least-loaded PM with room for it.
    pub fn place_lowest(&mut self, seg: &VmRequest) -> Option<usize> {
        let id = self.lowest_feasible(seg)?;
        self.update(id, |pm| pm.commit(seg));
        Some(id)
    }

    pub fn try_place_on(&mut self, id: usize, seg: &VmRequest) -> bool {
        if !self.pms[id].fits(seg) {
            return false;
        }
        self.update(id, |pm| pm.commit(seg));
        true
    }

    pub(crate) fn force_place_on(&mut self, id: usize, seg: &VmRequest) {
        self.update(id, |pm| pm.force_place(seg));
    }

    pub fn remove(&mut self, id: usize, seg: &VmRequest) -> Option<Placement> {
        let mut out = None;
        self.update(id, |pm| out = pm.remove(seg.id, seg.secondary));
        out
    }

    fn update(&mut self, id: usize, f: impl FnOnce(&mut PmState)) {
        let pm = &mut self.pms[id];
        self.by_load.remove(&(OrderedFloat(pm.load_cm()), id));
        f(pm);
        self.by_load.insert((OrderedFloat(pm.load_cm()), id));
    }
}

/// Smallest horizon covering every request's end slot.
pub fn horizon_of(requests: &[VmRequest]) -> u32 {
    requests.iter().map(|r| r.end_slot).max().unwrap_or(0)
}
