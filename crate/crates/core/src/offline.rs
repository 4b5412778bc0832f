//! Offline allocation: every request is known before placement starts.
//!
//! [`prepartition`] bounds how much capacity makespan any single piece of
//! work can add to a PM. It computes the lower bound
//! `P0 = max(max_j CM_j, sum_j CM_j / m)` on the optimum, cuts every request
//! whose capacity makespan exceeds `P0 / k` into equal time segments, and then
//! hands segments, largest first, to the least-loaded PM that has room.
//! Because no segment exceeds `OPT / k`, the final maximum load stays within
//! `(1 + 1/k)` of optimal on instances where capacity never forces a detour.
//!
//! The baselines are round-robin, LPT, and PMG (LPT followed by one
//! threshold-driven migration pass).

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{
    split_segment, validate_requests, Assignment, Fleet, IdAllocator, Schedule, ScheduleBuilder,
    SplitRecord, VmRequest, CAPACITY_EPSILON,
};
use crate::error::{Error, Result};

/// When a request is considered too large and gets partitioned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitGuard {
    /// Split when CM exceeds the segment bound `P0 / k`.
    #[default]
    SegmentBound,
    /// Split only when CM exceeds `P0` itself. Since `P0 >= max_j CM_j`
    /// this never fires; kept for comparison runs.
    LowerBound,
}

/// How `P0 / k` is rounded into a segment bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRounding {
    #[default]
    Exact,
    Ceil,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepartitionConfig {
    /// Partition value; the approximation slack is `1/k`.
    pub k: u32,
    /// Number of PMs.
    pub m: usize,
    #[serde(default)]
    pub guard: SplitGuard,
    #[serde(default)]
    pub rounding: BoundRounding,
}

impl PrepartitionConfig {
    pub fn new(k: u32, m: usize) -> Self {
        Self { k, m, guard: SplitGuard::default(), rounding: BoundRounding::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("partition value k must be at least 1".into()));
        }
        check_fleet(self.m)
    }
}

/// Order in which PMG considers a donor PM's VMs for removal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VictimOrder {
    /// Small VMs first, so more of them clear the low-threshold check.
    #[default]
    SmallestFirst,
    LargestFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmgConfig {
    /// Relative band around the mean load; thresholds are `avg * (1 ± f)`.
    pub threshold_factor: f64,
    pub victim_order: VictimOrder,
}

impl Default for PmgConfig {
    fn default() -> Self {
        Self { threshold_factor: 0.1, victim_order: VictimOrder::default() }
    }
}

impl PmgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_factor > 0.0 && self.threshold_factor < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "PMG threshold factor {} outside (0, 1)",
                self.threshold_factor
            )));
        }
        Ok(())
    }

    pub fn thresholds(&self, avg_load: f64) -> (f64, f64) {
        (avg_load * (1.0 - self.threshold_factor), avg_load * (1.0 + self.threshold_factor))
    }
}

pub(crate) fn check_fleet(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidConfig("fleet must contain at least one PM".into()));
    }
    Ok(())
}

/// Lower bound on the optimal capacity makespan over `m` PMs.
pub fn compute_p0(requests: &[VmRequest], m: usize) -> Result<f64> {
    if requests.is_empty() {
        return Err(Error::EmptyInput("the P0 bound"));
    }
    check_fleet(m)?;
    let (max, sum) = requests
        .iter()
        .map(VmRequest::capacity_makespan)
        .fold((0.0f64, 0.0f64), |(mx, s), cm| (mx.max(cm), s + cm));
    Ok(max.max(sum / m as f64))
}

/// Result of the partitioning phase, before any placement.
#[derive(Clone, Debug)]
pub struct PartitionPlan {
    pub p0: f64,
    /// Largest capacity makespan a segment may carry.
    pub segment_bound: f64,
    /// Segments in placement order.
    pub segments: Vec<VmRequest>,
    pub splits: Vec<SplitRecord>,
}

/// Partitions oversized requests and orders everything for placement:
/// capacity makespan descending, then start slot, then id.
pub fn prepartition_plan(requests: &[VmRequest], config: &PrepartitionConfig) -> Result<PartitionPlan> {
    config.validate()?;
    validate_requests(requests)?;
    let p0 = compute_p0(requests, config.m)?;
    let raw = p0 / f64::from(config.k);
    let segment_bound = match config.rounding {
        BoundRounding::Exact => raw,
        BoundRounding::Ceil => raw.ceil(),
    };
    let guard = match config.guard {
        SplitGuard::SegmentBound => segment_bound,
        SplitGuard::LowerBound => p0,
    };

    let mut ids = IdAllocator::above(requests);
    let mut segments = Vec::with_capacity(requests.len());
    let mut splits = Vec::new();
    for req in requests {
        if req.capacity_makespan() > guard + CAPACITY_EPSILON {
            let parts = split_segment(req, segment_bound, &mut ids);
            if parts.len() > 1 {
                splits.push(SplitRecord {
                    parent_id: req.id,
                    threshold: segment_bound,
                    segments: parts.len(),
                });
            }
            segments.extend(parts);
        } else {
            segments.push(req.clone());
        }
    }
    segments.sort_by(|a, b| {
        b.capacity_makespan()
            .total_cmp(&a.capacity_makespan())
            .then(a.start_slot.cmp(&b.start_slot))
            .then(a.id.cmp(&b.id))
    });
    Ok(PartitionPlan { p0, segment_bound, segments, splits })
}

/// Offline Prepartition.
pub fn prepartition(requests: &[VmRequest], config: &PrepartitionConfig) -> Result<Schedule> {
    if requests.is_empty() {
        config.validate()?;
        return Ok(ScheduleBuilder::new().finish(Fleet::new(config.m, 0)));
    }
    let plan = prepartition_plan(requests, config)?;
    let mut fleet = Fleet::for_requests(requests, config.m);
    Ok(place_plan(plan, &mut fleet).finish(fleet))
}

fn place_plan(plan: PartitionPlan, fleet: &mut Fleet) -> ScheduleBuilder {
    let mut builder = ScheduleBuilder::new();
    for split in plan.splits {
        builder.record_split(split.parent_id, split.threshold, split.segments);
    }
    for seg in plan.segments {
        builder.place_lowest(fleet, seg);
    }
    builder
}

/// Longest processing time first: duration descending, then id; each request
/// whole to the least-loaded PM with room.
pub fn lpt(requests: &[VmRequest], m: usize) -> Result<Schedule> {
    check_fleet(m)?;
    validate_requests(requests)?;
    let mut fleet = Fleet::for_requests(requests, m);
    let builder = lpt_into(requests, &mut fleet);
    Ok(builder.finish(fleet))
}

fn lpt_into(requests: &[VmRequest], fleet: &mut Fleet) -> ScheduleBuilder {
    let mut order: Vec<&VmRequest> = requests.iter().collect();
    order.sort_by(|a, b| b.duration_slots().cmp(&a.duration_slots()).then(a.id.cmp(&b.id)));
    let mut builder = ScheduleBuilder::new();
    for req in order {
        builder.place_lowest(fleet, req.clone());
    }
    builder
}

/// Places `seg` on the first PM with room, probing cyclically from `cursor`.
/// The cursor moves just past the PM used.
pub(crate) fn round_robin_place(
    fleet: &mut Fleet,
    builder: &mut ScheduleBuilder,
    seg: VmRequest,
    cursor: &mut usize,
) {
    let m = fleet.len();
    let target = (0..m).map(|step| (*cursor + step) % m).find(|&pm| fleet.pm(pm).fits(&seg));
    match target {
        Some(pm) => {
            fleet.try_place_on(pm, &seg);
            builder.assignments.push(Assignment { segment: seg, pm_id: pm });
            *cursor = (pm + 1) % m;
        }
        None => builder.rejected.push(seg),
    }
}

/// Round-robin in input order.
pub fn round_robin(requests: &[VmRequest], m: usize) -> Result<Schedule> {
    check_fleet(m)?;
    validate_requests(requests)?;
    let mut fleet = Fleet::for_requests(requests, m);
    let mut builder = ScheduleBuilder::new();
    let mut cursor = 0;
    for req in requests {
        round_robin_place(&mut fleet, &mut builder, req.clone(), &mut cursor);
    }
    Ok(builder.finish(fleet))
}

fn by_cm_desc(a: &VmRequest, b: &VmRequest) -> Ordering {
    b.capacity_makespan()
        .total_cmp(&a.capacity_makespan())
        .then(a.start_slot.cmp(&b.start_slot))
        .then(a.id.cmp(&b.id))
}

/// Post migration: LPT, then one rebalancing pass that pulls whole VMs off
/// PMs above the low threshold and re-places them below the up threshold.
pub fn pmg(requests: &[VmRequest], m: usize, config: &PmgConfig) -> Result<Schedule> {
    check_fleet(m)?;
    config.validate()?;
    validate_requests(requests)?;
    let mut fleet = Fleet::for_requests(requests, m);
    let mut builder = lpt_into(requests, &mut fleet);
    if builder.assignments.is_empty() {
        return Ok(builder.finish(fleet));
    }

    let avg = fleet.pms().iter().map(|pm| pm.load_cm()).sum::<f64>() / m as f64;
    let (low, up) = config.thresholds(avg);

    let mut slot_of: HashMap<u64, usize> =
        builder.assignments.iter().enumerate().map(|(i, a)| (a.segment.id, i)).collect();

    // Collect victims from loaded PMs, never letting a donor drop below the
    // low threshold.
    let mut donors: Vec<usize> = (0..m).filter(|&pm| fleet.pm(pm).load_cm() > low).collect();
    donors.sort_by(|&a, &b| fleet.pm(b).load_cm().total_cmp(&fleet.pm(a).load_cm()).then(a.cmp(&b)));
    let mut migration_list: Vec<(VmRequest, usize)> = Vec::new();
    for pm in donors {
        let mut hosted: Vec<VmRequest> = fleet
            .pm(pm)
            .assigned()
            .iter()
            .map(|p| builder.assignments[slot_of[&p.request_id]].segment.clone())
            .collect();
        hosted.sort_by(by_cm_desc);
        if config.victim_order == VictimOrder::SmallestFirst {
            hosted.reverse();
        }
        for vm in hosted {
            if fleet.pm(pm).load_cm() - vm.capacity_makespan() >= low - CAPACITY_EPSILON {
                fleet.remove(pm, &vm);
                migration_list.push((vm, pm));
            }
        }
    }
    migration_list.sort_by(|a, b| by_cm_desc(&a.0, &b.0));

    let mut leftovers = Vec::new();
    for (vm, origin) in migration_list {
        let target = fleet.lowest_feasible(&vm).filter(|&pm| {
            let load = fleet.pm(pm).load_cm();
            load < up && load + vm.capacity_makespan() <= up + CAPACITY_EPSILON
        });
        match target {
            Some(pm) => {
                fleet.try_place_on(pm, &vm);
                builder.assignments[slot_of[&vm.id]].pm_id = pm;
                builder.post_migrations += usize::from(pm != origin);
            }
            None => leftovers.push((vm, origin)),
        }
    }
    for (vm, origin) in leftovers {
        match fleet.place_lowest(&vm) {
            Some(pm) => {
                builder.assignments[slot_of[&vm.id]].pm_id = pm;
                builder.post_migrations += usize::from(pm != origin);
            }
            None => {
                let idx = slot_of.remove(&vm.id).expect("victim was assigned");
                builder.assignments.remove(idx);
                for slot in slot_of.values_mut() {
                    if *slot > idx {
                        *slot -= 1;
                    }
                }
                builder.rejected.push(vm);
            }
        }
    }
    Ok(builder.finish(fleet))
}
