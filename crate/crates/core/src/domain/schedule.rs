use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ledger::{Fleet, PmState};
use super::request::{VmRequest, CAPACITY_EPSILON};

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub segment: VmRequest,
    pub pm_id: usize,
}

/// One partitioning decision: which request was cut, under what capacity
/// makespan bound, into how many pieces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitRecord {
    pub parent_id: u64,
    pub threshold: f64,
    pub segments: usize,
}

/// The outcome of one scheduler run over a fleet.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub assignments: Vec<Assignment>,
    pub pm_states: Vec<PmState>,
    /// Total number of segments produced by partitioning.
    pub partition_count: usize,
    pub rejected: Vec<VmRequest>,
    pub splits: Vec<SplitRecord>,
    /// Whole-VM moves made after the initial allocation (post migration).
    pub post_migrations: usize,
    /// Lowest-load placements that had to pass over a less loaded PM because
    /// it lacked room in some slot.
    pub forced_placements: usize,
}

impl Schedule {
    pub fn capacity_makespan(&self) -> f64 {
        self.pm_states.iter().map(PmState::load_cm).fold(0.0, f64::max)
    }

    pub fn pm_count(&self) -> usize {
        self.pm_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn pm_of(&self, segment_id: u64) -> Option<usize> {
        self.assignments.iter().find(|a| a.segment.id == segment_id).map(|a| a.pm_id)
    }

    /// Adjacent segment pairs of the same parent that sit on different PMs.
    pub fn segment_migrations(&self) -> usize {
        self.segments_by_parent()
            .values()
            .map(|segs| segs.windows(2).filter(|w| w[0].pm_id != w[1].pm_id).count())
            .sum()
    }

    /// Planned segment migrations plus post-allocation moves.
    pub fn migration_count(&self) -> usize {
        self.segment_migrations() + self.post_migrations
    }

    /// Placed segments grouped by parent id, each group sorted by start slot.
    pub fn segments_by_parent(&self) -> BTreeMap<u64, Vec<&Assignment>> {
        let mut groups: BTreeMap<u64, Vec<&Assignment>> = BTreeMap::new();
        for a in self.assignments.iter().filter(|a| a.segment.is_segment()) {
            groups.entry(a.segment.root_id()).or_default().push(a);
        }
        for segs in groups.values_mut() {
            segs.sort_by_key(|a| a.segment.start_slot);
        }
        groups
    }

    pub fn rejected_ids(&self) -> Vec<u64> {
        self.rejected.iter().map(|r| r.id).collect()
    }

    /// Checks every structural invariant against the original requests.
    /// Returns an empty list when the schedule is sound.
    pub fn check_invariants(&self, originals: &[VmRequest]) -> Vec<InvariantViolation> {
        let mut out = Vec::new();

        for pm in &self.pm_states {
            if let Some((slot, &usage)) = pm
                .slot_usage()
                .iter()
                .enumerate()
                .find(|(_, &u)| u > 1.0 + CAPACITY_EPSILON)
            {
                out.push(InvariantViolation::SlotOverflow { pm: pm.id(), slot: slot as u32, usage });
            }
            let recomputed = pm.recompute_load_cm();
            if (recomputed - pm.load_cm()).abs() > 1e-9 * recomputed.max(1.0) {
                out.push(InvariantViolation::LedgerDrift {
                    pm: pm.id(),
                    stored: pm.load_cm(),
                    recomputed,
                });
            }
        }

        let mut seen = HashSet::new();
        for a in &self.assignments {
            let hosted = self
                .pm_states
                .get(a.pm_id)
                .map_or(0, |pm| pm.assigned().iter().filter(|p| p.request_id == a.segment.id).count());
            if !seen.insert(a.segment.id) || hosted != 1 {
                out.push(InvariantViolation::SegmentPlacement { segment: a.segment.id });
            }
        }
        let hosted_total: usize = self.pm_states.iter().map(|pm| pm.assigned().len()).sum();
        if hosted_total != self.assignments.len() {
            out.push(InvariantViolation::UntrackedPlacements {
                ledger: hosted_total,
                assignments: self.assignments.len(),
            });
        }

        let mut pieces: HashMap<u64, Vec<(u32, u32)>> = HashMap::new();
        for r in self.assignments.iter().map(|a| &a.segment).chain(&self.rejected) {
            pieces.entry(r.root_id()).or_default().push((r.start_slot, r.end_slot));
        }
        for orig in originals {
            let mut parts = pieces.remove(&orig.id).unwrap_or_default();
            parts.sort_unstable();
            let mut cursor = orig.start_slot;
            let contiguous = parts.iter().all(|&(s, e)| {
                let ok = s == cursor && e > s;
                cursor = e;
                ok
            });
            if !contiguous || cursor != orig.end_slot {
                out.push(InvariantViolation::SegmentCoverage { parent: orig.id });
            }
        }
        for parent in pieces.keys() {
            out.push(InvariantViolation::SegmentCoverage { parent: *parent });
        }

        let expected: f64 = originals.iter().map(VmRequest::capacity_makespan).sum();
        let actual: f64 = self.pm_states.iter().map(PmState::load_cm).sum::<f64>()
            + self.rejected.iter().map(VmRequest::capacity_makespan).sum::<f64>();
        if (expected - actual).abs() > 1e-9 * expected.max(1.0) {
            out.push(InvariantViolation::Conservation { expected, actual });
        }

        for (parent, segs) in self.segments_by_parent() {
            let moves = segs.windows(2).filter(|w| w[0].pm_id != w[1].pm_id).count();
            if moves + 1 > segs.len().max(1) {
                out.push(InvariantViolation::MigrationCount { parent });
            }
        }
        out
    }

    pub fn to_document(&self) -> ScheduleDocument {
        ScheduleDocument {
            assignments: self
                .assignments
                .iter()
                .map(|a| AssignmentRecord {
                    segment_id: a.segment.id,
                    parent_id: a.segment.parent_id,
                    pm_id: a.pm_id,
                    start_slot: a.segment.start_slot,
                    end_slot: a.segment.end_slot,
                    demand: a.segment.demand,
                })
                .collect(),
            partition_count: self.partition_count,
            rejected: self.rejected_ids(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum InvariantViolation {
    #[error("PM {pm} slot {slot} carries {usage} > capacity")]
    SlotOverflow { pm: usize, slot: u32, usage: f64 },
    #[error("PM {pm} load {stored} disagrees with recomputed {recomputed}")]
    LedgerDrift { pm: usize, stored: f64, recomputed: f64 },
    #[error("segment {segment} is not hosted by exactly one PM")]
    SegmentPlacement { segment: u64 },
    #[error("ledgers host {ledger} placements but {assignments} assignments exist")]
    UntrackedPlacements { ledger: usize, assignments: usize },
    #[error("segments of request {parent} do not tile its interval")]
    SegmentCoverage { parent: u64 },
    #[error("capacity makespan not conserved: expected {expected}, found {actual}")]
    Conservation { expected: f64, actual: f64 },
    #[error("request {parent} migrates more often than it has segment boundaries")]
    MigrationCount { parent: u64 },
}

/// JSON form of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    pub assignments: Vec<AssignmentRecord>,
    pub partition_count: usize,
    pub rejected: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub segment_id: u64,
    pub parent_id: Option<u64>,
    pub pm_id: usize,
    pub start_slot: u32,
    pub end_slot: u32,
    pub demand: f64,
}

/// Accumulates placements while a scheduler runs.
#[derive(Debug, Default)]
pub struct ScheduleBuilder {
    pub assignments: Vec<Assignment>,
    pub rejected: Vec<VmRequest>,
    pub splits: Vec<SplitRecord>,
    pub partition_count: usize,
    pub post_migrations: usize,
    pub forced_placements: usize,
}

impl ScheduleBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Places on the least-loaded feasible PM, or records a rejection.
    pub fn place_lowest(&mut self, fleet: &mut Fleet, seg: VmRequest) -> Option<usize> {
        let min_load = fleet.by_load().next().map_or(0.0, |id| fleet.pm(id).load_cm());
        match fleet.place_lowest(&seg) {
            Some(pm_id) => {
                let before = fleet.pm(pm_id).load_cm() - seg.capacity_makespan();
                self.forced_placements += usize::from(before > min_load + CAPACITY_EPSILON);
                self.assignments.push(Assignment { segment: seg, pm_id });
                Some(pm_id)
            }
            None => {
                log::debug!("request {} rejected: no PM has room", seg.id);
                self.rejected.push(seg);
                None
            }
        }
    }

    pub fn record_split(&mut self, parent_id: u64, threshold: f64, segments: usize) {
        self.partition_count += segments;
        self.splits.push(SplitRecord { parent_id, threshold, segments });
    }

    pub fn finish(self, fleet: Fleet) -> Schedule {
        Schedule {
            assignments: self.assignments,
            pm_states: fleet.into_pms(),
            partition_count: self.partition_count,
            rejected: self.rejected,
            splits: self.splits,
            post_migrations: self.post_migrations,
            forced_placements: self.forced_placements,
        }
    }
}
