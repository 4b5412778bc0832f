//! Online allocation: requests are handled one at a time in arrival order
//! (start slot, then id) with no knowledge of later arrivals.
//!
//! [`prepartition_online`] keeps a running dynamic balance value
//! `B_d = min(max_j CM_j / 2, sum_j CM_j / m)` over everything that has
//! arrived so far. An arrival whose capacity makespan exceeds `B_d / k` is cut
//! into equal segments; the first runs immediately and the rest wait in a
//! queue until the arrival clock reaches their start slot, at which point each
//! goes to whichever PM is least loaded then.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    split_segment, validate_requests, Assignment, Fleet, IdAllocator, Schedule, ScheduleBuilder,
    VmRequest, CAPACITY_EPSILON,
};
use crate::error::{Error, Result};
use crate::offline::{check_fleet, round_robin_place};

/// State carried across arrivals by the online Prepartition scheduler.
#[derive(Clone, Debug)]
pub struct OnlineContext {
    arrived_cms: Vec<f64>,
    max_cm: f64,
    sum_cm: f64,
    m: usize,
    k: u32,
    pending: BTreeMap<(u32, u64), VmRequest>,
}

impl OnlineContext {
    pub fn new(m: usize, k: u32) -> Result<Self> {
        check_fleet(m)?;
        if k == 0 {
            return Err(Error::InvalidConfig("partition value k must be at least 1".into()));
        }
        Ok(Self { arrived_cms: Vec::new(), max_cm: 0.0, sum_cm: 0.0, m, k, pending: BTreeMap::new() })
    }

    /// Records an original (unpartitioned) arrival.
    pub fn arrive(&mut self, cm: f64) {
        self.arrived_cms.push(cm);
        self.max_cm = self.max_cm.max(cm);
        self.sum_cm += cm;
    }

    pub fn arrived_cms(&self) -> &[f64] {
        &self.arrived_cms
    }

    /// Dynamic balance value over all arrivals so far.
    pub fn compute_bd(&self) -> Result<f64> {
        if self.arrived_cms.is_empty() {
            return Err(Error::EmptyInput("the dynamic balance value"));
        }
        Ok((self.max_cm / 2.0).min(self.sum_cm / self.m as f64))
    }

    /// Capacity makespan above which the next arrival gets partitioned.
    pub fn split_threshold(&self) -> Result<f64> {
        Ok(self.compute_bd()? / f64::from(self.k))
    }

    pub fn defer(&mut self, seg: VmRequest) {
        self.pending.insert((seg.start_slot, seg.id), seg);
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Removes and returns queued segments starting at or before `slot`,
    /// earliest first.
    pub fn take_due(&mut self, slot: u32) -> Vec<VmRequest> {
        let later = self.pending.split_off(&(slot + 1, 0));
        std::mem::replace(&mut self.pending, later).into_values().collect()
    }

    pub fn take_all(&mut self) -> Vec<VmRequest> {
        std::mem::take(&mut self.pending).into_values().collect()
    }
}

fn arrival_order(stream: &[VmRequest]) -> Vec<&VmRequest> {
    let mut order: Vec<&VmRequest> = stream.iter().collect();
    order.sort_by_key(|r| (r.start_slot, r.id));
    order
}

/// Online Prepartition.
pub fn prepartition_online(stream: &[VmRequest], m: usize, k: u32) -> Result<Schedule> {
    let mut ctx = OnlineContext::new(m, k)?;
    validate_requests(stream)?;
    let mut fleet = Fleet::for_requests(stream, m);
    let mut builder = ScheduleBuilder::new();
    let mut ids = IdAllocator::above(stream);

    for arrival in arrival_order(stream) {
        for seg in ctx.take_due(arrival.start_slot) {
            builder.place_lowest(&mut fleet, seg);
        }
        let cm = arrival.capacity_makespan();
        ctx.arrive(cm);
        let threshold = ctx.split_threshold()?;
        if cm > threshold + CAPACITY_EPSILON {
            let mut segments = split_segment(arrival, threshold, &mut ids).into_iter();
            let count = segments.len();
            if count > 1 {
                builder.record_split(arrival.id, threshold, count);
            }
            let first = segments.next().expect("split yields at least one segment");
            builder.place_lowest(&mut fleet, first);
            for seg in segments {
                ctx.defer(seg);
            }
        } else {
            builder.place_lowest(&mut fleet, arrival.clone());
        }
    }
    for seg in ctx.take_all() {
        builder.place_lowest(&mut fleet, seg);
    }
    Ok(builder.finish(fleet))
}

/// Each arrival, whole, to the least-loaded PM with room.
pub fn olrsa(stream: &[VmRequest], m: usize) -> Result<Schedule> {
    check_fleet(m)?;
    validate_requests(stream)?;
    let mut fleet = Fleet::for_requests(stream, m);
    let mut builder = ScheduleBuilder::new();
    for arrival in arrival_order(stream) {
        builder.place_lowest(&mut fleet, arrival.clone());
    }
    Ok(builder.finish(fleet))
}

/// Each arrival to a PM drawn uniformly among those with room, using
/// ChaCha8 seeded from `seed`.
pub fn random_online(stream: &[VmRequest], m: usize, seed: u64) -> Result<Schedule> {
    check_fleet(m)?;
    validate_requests(stream)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fleet = Fleet::for_requests(stream, m);
    let mut builder = ScheduleBuilder::new();
    for arrival in arrival_order(stream) {
        let feasible = fleet.feasible(arrival);
        if feasible.is_empty() {
            builder.rejected.push(arrival.clone());
            continue;
        }
        let pm_id = feasible[rng.random_range(0..feasible.len())];
        fleet.try_place_on(pm_id, arrival);
        builder.assignments.push(Assignment { segment: arrival.clone(), pm_id });
    }
    Ok(builder.finish(fleet))
}

/// Round-robin over arrivals.
pub fn round_robin_online(stream: &[VmRequest], m: usize) -> Result<Schedule> {
    check_fleet(m)?;
    validate_requests(stream)?;
    let mut fleet = Fleet::for_requests(stream, m);
    let mut builder = ScheduleBuilder::new();
    let mut cursor = 0;
    for arrival in arrival_order(stream) {
        round_robin_place(&mut fleet, &mut builder, arrival.clone(), &mut cursor);
    }
    Ok(builder.finish(fleet))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::segment_count;

    fn req(id: u64, start: u32, end: u32, demand: f64) -> VmRequest {
        VmRequest::new(id, start, end, demand).unwrap()
    }

    fn ctx_with(cms: &[f64], m: usize) -> OnlineContext {
        let mut ctx = OnlineContext::new(m, 1).unwrap();
        cms.iter().for_each(|&c| ctx.arrive(c));
        ctx
    }

    #[test]
    fn balance_value_examples() {
        assert_eq!(ctx_with(&[4.0, 2.0], 2).compute_bd().unwrap(), 2.0);
        assert_eq!(ctx_with(&[10.0], 5).compute_bd().unwrap(), 2.0);
        assert_eq!(ctx_with(&[2.0, 2.0, 2.0, 2.0], 2).compute_bd().unwrap(), 1.0);
        assert!(ctx_with(&[], 2).compute_bd().is_err());
    }

    #[test]
    fn first_arrival_split_into_unit_segments() {
        let stream = vec![req(0, 0, 6, 1.0)];
        let s = prepartition_online(&stream, 2, 3).unwrap();
        // B_d = min(3, 3) = 3, threshold 1
        assert_eq!(s.splits.len(), 1);
        assert_eq!(s.splits[0].threshold, 1.0);
        assert_eq!(s.partition_count, 6);
        assert_eq!(s.assignments.len(), 6);
        assert!(s.assignments.iter().all(|a| a.segment.duration_slots() == 1));
        assert!(s.check_invariants(&stream).is_empty());
    }

    #[test]
    fn first_segment_placed_before_queue_drains() {
        let stream = vec![req(0, 0, 6, 1.0), req(1, 2, 3, 0.25)];
        let s = prepartition_online(&stream, 2, 3).unwrap();
        let order: Vec<(u64, u32)> =
            s.assignments.iter().map(|a| (a.segment.root_id(), a.segment.start_slot)).collect();
        // segments at slots 1 and 2 drain before arrival 1 is handled
        assert_eq!(&order[..4], &[(0, 0), (0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn small_arrival_placed_whole() {
        let stream = vec![req(0, 0, 8, 1.0), req(1, 20, 21, 0.5)];
        let s = prepartition_online(&stream, 2, 2).unwrap();
        let before = s.partition_count;
        assert!(s.assignments.iter().any(|a| a.segment.id == 1 && !a.segment.is_segment()));
        assert_eq!(s.splits.len(), 1);
        assert_eq!(before, s.splits[0].segments);
    }

    #[test]
    fn partition_accounting_matches_formula() {
        let stream: Vec<VmRequest> = (0..12)
            .map(|i| req(i, (i as u32) * 3, (i as u32) * 3 + 4 + (i as u32 % 5) * 7, 0.25 * (1 + i % 4) as f64))
            .collect();
        let s = prepartition_online(&stream, 3, 4).unwrap();
        let mut expected = 0;
        for split in &s.splits {
            let parent = stream.iter().find(|r| r.id == split.parent_id).unwrap();
            assert_eq!(split.segments, segment_count(parent, split.threshold));
            expected += split.segments;
        }
        assert_eq!(s.partition_count, expected);
        assert!(s.check_invariants(&stream).is_empty());
    }

    #[test]
    fn olrsa_lowest_load_rule() {
        let stream = vec![req(0, 0, 3, 1.0), req(1, 0, 1, 1.0), req(2, 5, 7, 1.0)];
        let s = olrsa(&stream, 2).unwrap();
        let loads: Vec<f64> = s.pm_states.iter().map(|p| p.load_cm()).collect();
        assert_eq!(loads, vec![3.0, 3.0]);
        assert_eq!(s.pm_of(2), Some(1));
    }

    #[test]
    fn olrsa_tie_goes_to_lowest_index() {
        let stream = vec![req(0, 0, 2, 1.0), req(1, 0, 2, 1.0), req(2, 4, 5, 0.5)];
        let s = olrsa(&stream, 2).unwrap();
        assert_eq!(s.pm_of(2), Some(0));
    }

    #[test]
    fn olrsa_feasibility_before_load() {
        let stream = vec![req(0, 0, 9, 0.5), req(1, 0, 1, 1.0), req(2, 0, 1, 0.5)];
        let s = olrsa(&stream, 2).unwrap();
        // PM1 is lighter but slot 0 is full there
        assert_eq!(s.pm_of(2), Some(0));
    }

    #[test]
    fn degenerates_to_olrsa_without_splits() {
        // one-slot requests cannot be partitioned
        let stream: Vec<VmRequest> =
            (0..40).map(|i| req(i, (i as u32 * 7) % 11, (i as u32 * 7) % 11 + 1, 0.125 * (1 + i % 8) as f64)).collect();
        let a = prepartition_online(&stream, 3, 4).unwrap();
        let b = olrsa(&stream, 3).unwrap();
        assert_eq!(a.partition_count, 0);
        assert_eq!(a.to_document(), b.to_document());
    }

    #[test]
    fn random_single_feasible_pm() {
        let stream = vec![req(0, 0, 4, 1.0), req(1, 0, 4, 0.5)];
        for seed in 0..20 {
            let s = random_online(&stream, 2, seed).unwrap();
            assert_ne!(s.pm_of(0), s.pm_of(1));
        }
    }

    #[test]
    fn random_is_seeded() {
        let stream: Vec<VmRequest> = (0..50).map(|i| req(i, i as u32, i as u32 + 3, 0.25)).collect();
        let a = random_online(&stream, 4, 9).unwrap().to_document();
        let b = random_online(&stream, 4, 9).unwrap().to_document();
        assert_eq!(a, b);
        let c = random_online(&stream, 4, 10).unwrap().to_document();
        assert_ne!(a, c);
    }

    #[test]
    fn random_is_uniform_over_two_pms() {
        let stream: Vec<VmRequest> = (0..10_000).map(|i| req(i, i as u32, i as u32 + 1, 0.01)).collect();
        let s = random_online(&stream, 2, 42).unwrap();
        let on_first = s.assignments.iter().filter(|a| a.pm_id == 0).count() as f64;
        let share = on_first / 10_000.0;
        assert!((share - 0.5).abs() <= 0.02, "share {share}");
    }

    #[test]
    fn online_round_robin_matches_offline_on_sorted_input() {
        let stream: Vec<VmRequest> = (0..9).map(|i| req(i, i as u32, i as u32 + 5, 0.5)).collect();
        let on = round_robin_online(&stream, 3).unwrap().to_document();
        let off = crate::offline::round_robin(&stream, 3).unwrap().to_document();
        assert_eq!(on, off);
    }

    #[test]
    fn pending_queue_orders_by_start_then_id() {
        let mut ctx = OnlineContext::new(1, 1).unwrap();
        ctx.defer(req(5, 4, 6, 0.5));
        ctx.defer(req(3, 2, 3, 0.5));
        ctx.defer(req(1, 4, 5, 0.5));
        let due: Vec<u64> = ctx.take_due(4).iter().map(|r| r.id).collect();
        assert_eq!(due, vec![3, 1, 5]);
        assert_eq!(ctx.pending_len(), 0);
    }
}
