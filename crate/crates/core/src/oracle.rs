//! Exhaustive optimum for small instances, and a harness that compares a
//! scheduler's capacity makespan against it.
//!
//! The oracle keeps its own slot arithmetic rather than reusing the PM ledger
//! so that a bug in one cannot hide a bug in the other. Requests are placed
//! whole; the optimum is therefore the best schedule without migration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::{Schedule, VmRequest, CAPACITY_EPSILON};
use crate::error::{Error, Result};
use crate::workload::requests_to_json;

/// Largest search space `m^n` the oracle agrees to walk.
pub const ORACLE_LIMIT: u64 = 10_000_000;

/// Slack allowed when comparing a scheduler's makespan against a bound.
pub const RATIO_TOLERANCE: f64 = 1e-9;

pub const MAX_DRAWS_PER_TRIAL: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub opt_cm: f64,
    /// PM index for each request, in input order.
    pub opt_assignment: Vec<usize>,
    pub nodes_explored: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum OracleOutcome {
    Optimal(OracleResult),
    /// No assignment places every request without overfilling a slot.
    Infeasible { nodes_explored: u64 },
}

impl OracleOutcome {
    pub fn optimal(&self) -> Option<&OracleResult> {
        match self {
            OracleOutcome::Optimal(r) => Some(r),
            OracleOutcome::Infeasible { .. } => None,
        }
    }
}

fn check_size(requests: &[VmRequest], m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidConfig("fleet must contain at least one PM".into()));
    }
    let too_large = || Error::InstanceTooLarge { pms: m, requests: requests.len(), limit: ORACLE_LIMIT };
    let mut space: u64 = 1;
    for _ in requests {
        space = space.checked_mul(m as u64).ok_or_else(too_large)?;
        if space > ORACLE_LIMIT {
            return Err(too_large());
        }
    }
    Ok(())
}

struct Search<'a> {
    jobs: &'a [VmRequest],
    usage: Vec<Vec<f64>>,
    loads: Vec<f64>,
    current: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    nodes: u64,
    prune: bool,
}

impl Search<'_> {
    fn fits(&self, pm: usize, job: &VmRequest) -> bool {
        (job.start_slot..job.end_slot).all(|t| self.usage[pm][t as usize] + job.demand <= 1.0 + CAPACITY_EPSILON)
    }

    fn apply(&mut self, pm: usize, job: &VmRequest, sign: f64) {
        for t in job.start_slot..job.end_slot {
            self.usage[pm][t as usize] += sign * job.demand;
        }
        self.loads[pm] += sign * job.demand * f64::from(job.duration_slots());
    }

    fn walk(&mut self, depth: usize, used: usize) {
        self.nodes += 1;
        let partial = self.loads.iter().copied().fold(0.0, f64::max);
        if self.prune {
            if let Some((best, _)) = &self.best {
                if partial >= *best - CAPACITY_EPSILON {
                    return;
                }
            }
        }
        if depth == self.jobs.len() {
            if self.best.as_ref().is_none_or(|(b, _)| partial < *b - CAPACITY_EPSILON) {
                self.best = Some((partial, self.current.clone()));
            }
            return;
        }
        let job = &self.jobs[depth];
        // PMs are interchangeable, so among the empty ones only the first
        // needs trying.
        let limit = if self.prune { (used + 1).min(self.loads.len()) } else { self.loads.len() };
        for pm in 0..limit {
            if !self.fits(pm, job) {
                continue;
            }
            self.apply(pm, job, 1.0);
            self.current[depth] = pm;
            self.walk(depth + 1, used.max(pm + 1));
            self.apply(pm, job, -1.0);
        }
    }
}

fn solve(requests: &[VmRequest], m: usize, prune: bool) -> Result<OracleOutcome> {
    check_size(requests, m)?;
    for r in requests {
        r.validate()?;
    }
    let mut order: Vec<usize> = (0..requests.len()).collect();
    if prune {
        order.sort_by(|&a, &b| {
            requests[b].capacity_makespan().total_cmp(&requests[a].capacity_makespan()).then(a.cmp(&b))
        });
    }
    let jobs: Vec<VmRequest> = order.iter().map(|&i| requests[i].clone()).collect();
    let horizon = jobs.iter().map(|j| j.end_slot).max().unwrap_or(0) as usize;
    let mut search = Search {
        jobs: &jobs,
        usage: vec![vec![0.0; horizon]; m],
        loads: vec![0.0; m],
        current: vec![0; jobs.len()],
        best: None,
        nodes: 0,
        prune,
    };
    search.walk(0, 0);
    let nodes_explored = search.nodes;
    Ok(match search.best {
        None => OracleOutcome::Infeasible { nodes_explored },
        Some((opt_cm, placed)) => {
            let mut opt_assignment = vec![0; requests.len()];
            for (pos, &orig) in order.iter().enumerate() {
                opt_assignment[orig] = placed[pos];
            }
            OracleOutcome::Optimal(OracleResult { opt_cm, opt_assignment, nodes_explored })
        }
    })
}

/// Minimum capacity makespan over every whole-request assignment to `m` PMs.
///
/// ```
/// use prepartition::{oracle::brute_force_opt, VmRequest};
///
/// let jobs: Vec<VmRequest> = (0..3).map(|i| VmRequest::new(i, i as u32, i as u32 + 1, 1.0).unwrap()).collect();
/// let opt = brute_force_opt(&jobs, 2).unwrap();
/// assert_eq!(opt.optimal().unwrap().opt_cm, 2.0);
/// ```
pub fn brute_force_opt(requests: &[VmRequest], m: usize) -> Result<OracleOutcome> {
    solve(requests, m, true)
}

/// Same answer as [`brute_force_opt`] without ordering, symmetry breaking or
/// pruning. Only useful for cross-checking on tiny instances.
pub fn exhaustive_opt(requests: &[VmRequest], m: usize) -> Result<OracleOutcome> {
    solve(requests, m, false)
}

/// A random small instance for ratio checks.
#[derive(Clone, Debug, Serialize)]
pub struct Instance {
    pub requests: Vec<VmRequest>,
    pub m: usize,
}

/// `n` in [2, 10], `m` in [2, 3], demands from {1/8, 1/4, 1/2, 1}, durations
/// in [1, 12] slots, starts in [0, 12].
pub fn small_instance(rng: &mut impl Rng) -> Instance {
    const DEMANDS: [f64; 4] = [0.125, 0.25, 0.5, 1.0];
    let n = rng.random_range(2..=10u64);
    let m = rng.random_range(2..=3usize);
    let requests = (0..n)
        .map(|id| {
            let start = rng.random_range(0..=12u32);
            let duration = rng.random_range(1..=12u32);
            let demand = DEMANDS[rng.random_range(0..DEMANDS.len())];
            VmRequest::new(id, start, start + duration, demand).expect("generated request is valid")
        })
        .collect();
    Instance { requests, m }
}

/// Demand-1 jobs laid end to end. No two overlap, so every assignment is
/// feasible and the problem is classical multiprocessor scheduling with the
/// durations as processing times.
pub fn classical_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(2..=10u64);
    let m = rng.random_range(2..=3usize);
    let mut start = 0;
    let requests = (0..n)
        .map(|id| {
            let duration = rng.random_range(1..=12u32);
            let r = VmRequest::new(id, start, start + duration, 1.0).expect("generated request is valid");
            start += duration;
            r
        })
        .collect();
    Instance { requests, m }
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioViolation {
    pub instance_json: String,
    pub m: usize,
    pub algorithm_cm: f64,
    pub opt_cm: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RatioReport {
    pub trials: usize,
    /// Instances generated, including skipped ones.
    pub drawn: usize,
    pub evaluated: usize,
    pub skipped_infeasible: usize,
    pub skipped_rejected: usize,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
    pub violations: Vec<RatioViolation>,
}

impl RatioReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mean_ratio(&self) -> f64 {
        if self.ratios.is_empty() {
            0.0
        } else {
            self.ratios.iter().sum::<f64>() / self.ratios.len() as f64
        }
    }
}

/// Draws instances until `trials` of them have a full optimal assignment and
/// a schedule with no rejections, and checks `cm <= bound(m) * opt +
/// RATIO_TOLERANCE` on each. Gives up after `MAX_DRAWS_PER_TRIAL * trials`
/// draws; `evaluated` then falls short of `trials`.
pub fn ratio_harness<G, A, B>(mut generate: G, algorithm: A, bound: B, trials: usize, seed: u64) -> Result<RatioReport>
where
    G: FnMut(&mut ChaCha8Rng) -> Instance,
    A: Fn(&[VmRequest], usize) -> Result<Schedule>,
    B: Fn(usize) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = RatioReport { trials, ..RatioReport::default() };
    while report.evaluated < trials && report.drawn < MAX_DRAWS_PER_TRIAL * trials {
        report.drawn += 1;
        let inst = generate(&mut rng);
        let Some(opt) = brute_force_opt(&inst.requests, inst.m)?.optimal().cloned() else {
            report.skipped_infeasible += 1;
            continue;
        };
        let schedule = algorithm(&inst.requests, inst.m)?;
        if !schedule.rejected.is_empty() {
            report.skipped_rejected += 1;
            continue;
        }
        report.evaluated += 1;
        let cm = schedule.capacity_makespan();
        let ratio = if opt.opt_cm > 0.0 { cm / opt.opt_cm } else { 1.0 };
        report.max_ratio = report.max_ratio.max(ratio);
        report.ratios.push(ratio);
        let bound = bound(inst.m);
        if cm > bound * opt.opt_cm + RATIO_TOLERANCE {
            report.violations.push(RatioViolation {
                instance_json: requests_to_json(&inst.requests)?,
                m: inst.m,
                algorithm_cm: cm,
                opt_cm: opt.opt_cm,
                bound,
            });
        }
    }
    Ok(report)
}
