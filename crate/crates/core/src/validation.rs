//! Property checks over randomized runs: per-slot capacity, schedule
//! structure, split thresholds, and approximation ratios against the oracle.
//!
//! Each check returns a [`PropertyResult`]; failures carry a JSON dump of the
//! first offending instance so it can be replayed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algorithm::{Algorithm, RunParams};
use crate::domain::{Fleet, Schedule, ScheduleBuilder, VmRequest, CAPACITY_EPSILON};
use crate::error::Result;
use crate::offline::{lpt, prepartition, prepartition_plan, PrepartitionConfig};
use crate::online::{prepartition_online, OnlineContext};
use crate::oracle::{classical_instance, ratio_harness, small_instance, RatioReport, RatioViolation};
use crate::workload::{generate_synthetic, pm_catalog, requests_to_json, vm_catalog, SyntheticSpec};

#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Violations that are explained by a known limit of the model and are
    /// reported rather than counted as failures.
    pub explained: usize,
    pub detail: String,
    pub counterexample: Option<String>,
}

impl PropertyResult {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), checked: 0, violations: 0, explained: 0, detail: String::new(), counterexample: None }
    }

    /// No unexplained violations.
    pub fn passed(&self) -> bool {
        self.violations == self.explained
    }

    /// No violations at all.
    pub fn clean(&self) -> bool {
        self.violations == 0
    }

    fn record(&mut self, dump: impl FnOnce() -> String) {
        self.violations += 1;
        if self.counterexample.is_none() {
            self.counterexample = Some(dump());
        }
    }
}

/// Peak slot usage recomputed from the assignment list alone, without the
/// PM ledgers.
pub fn recomputed_peak(schedule: &Schedule) -> f64 {
    let horizon = schedule.assignments.iter().map(|a| a.segment.end_slot).max().unwrap_or(0) as usize;
    let mut usage = vec![vec![0.0; horizon]; schedule.pm_count()];
    for a in &schedule.assignments {
        for t in a.segment.start_slot..a.segment.end_slot {
            usage[a.pm_id][t as usize] += a.segment.demand;
        }
    }
    usage.iter().flatten().copied().fold(0.0, f64::max)
}

/// A random workload drawn against a random PM type, with VM types too large
/// for that PM switched off. A quarter of workloads carry memory and storage
/// demands, which turns on the secondary gate.
pub fn mixed_catalog_workload(rng: &mut impl Rng, max_n: usize) -> Result<(Vec<VmRequest>, String)> {
    let pms = pm_catalog();
    let pm = &pms[rng.random_range(0..pms.len())];
    let vms = vm_catalog();
    let attach_secondary = rng.random_bool(0.25);
    let mut weights: Vec<f64> = vms
        .iter()
        .map(|vm| {
            let fits = vm.compute_units <= pm.compute_units
                && (!attach_secondary || (vm.memory_gb <= pm.memory_gb && vm.storage_gb <= pm.storage_gb));
            if fits {
                rng.random_range(0.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        weights[0] = 1.0;
    }
    let spec = SyntheticSpec {
        n_requests: rng.random_range(1..=max_n),
        duration_mean_slots: rng.random_range(12.0..1000.0),
        duration_std_slots: rng.random_range(0.0..300.0),
        start_window_slots: rng.random_range(0..2016),
        horizon_slots: 4032,
        vm_type_weights: weights,
        pm_type: pm.label.clone(),
        attach_secondary,
        seed: rng.random(),
    };
    Ok((generate_synthetic(&spec, &vms, pm)?, pm.label.clone()))
}

/// Runs every algorithm on `instances` random mixed-catalog workloads and
/// checks each schedule's structural invariants plus an independent per-slot
/// recount.
pub fn capacity_sweep(instances: usize, max_n: usize, seed: u64) -> Result<PropertyResult> {
    let outcomes: Vec<Result<(usize, Option<String>)>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let (requests, _) = mixed_catalog_workload(&mut rng, max_n)?;
            let m = rng.random_range(1..=(requests.len() / 3).max(2));
            let k = rng.random_range(1..=10);
            let mut bad = None;
            let mut runs = 0;
            for algorithm in Algorithm::ALL {
                let schedule = algorithm.run(&requests, &RunParams::new(m, k, i as u64))?;
                runs += 1;
                let issues = schedule.check_invariants(&requests);
                if !issues.is_empty() || recomputed_peak(&schedule) > 1.0 + CAPACITY_EPSILON {
                    bad.get_or_insert_with(|| format!("{algorithm} m={m} k={k}: {issues:?}"));
                }
            }
            Ok((runs, bad.map(|b| format!("{b}\n{}", requests_to_json(&requests).unwrap_or_default()))))
        })
        .collect();
    let mut result = PropertyResult::new("per-slot capacity and schedule invariants");
    for outcome in outcomes {
        let (runs, bad) = outcome?;
        result.checked += runs;
        if let Some(dump) = bad {
            result.record(|| dump);
        }
    }
    result.detail = format!("{} runs over {instances} workloads", result.checked);
    Ok(result)
}

/// A scheduler with the capacity check removed: lowest load, no feasibility.
/// Used to confirm the invariant suite catches overflows.
pub fn capacity_blind_lowest_load(requests: &[VmRequest], m: usize) -> Schedule {
    let mut fleet = Fleet::for_requests(requests, m);
    let mut builder = ScheduleBuilder::new();
    for r in requests {
        let pm = fleet.by_load().next().expect("fleet is non-empty");
        fleet.force_place_on(pm, r);
        builder.assignments.push(crate::domain::Assignment { segment: r.clone(), pm_id: pm });
    }
    builder.finish(fleet)
}

/// Checks the invariant suite against the capacity-blind scheduler; the
/// property holds when the suite reports the overflow.
pub fn mutation_check(seed: u64) -> Result<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = PropertyResult::new("injected capacity bug is detected");
    for _ in 0..20 {
        let inst = small_instance(&mut rng);
        let mut requests = inst.requests;
        // Two full-demand requests over the same slots cannot share a PM.
        let id = requests.len() as u64;
        requests.push(VmRequest::new(id, 0, 4, 1.0)?);
        requests.push(VmRequest::new(id + 1, 0, 4, 1.0)?);
        let schedule = capacity_blind_lowest_load(&requests, 1);
        result.checked += 1;
        let caught = !schedule.check_invariants(&requests).is_empty() && recomputed_peak(&schedule) > 1.0;
        if !caught {
            result.record(|| requests_to_json(&requests).unwrap_or_default());
        }
    }
    Ok(result)
}

/// Why a ratio check failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationCause {
    /// Some placement skipped a less loaded PM for lack of room, which the
    /// classical list-scheduling argument does not allow for.
    CapacityForced,
    /// Some piece carries more than `OPT / k` because a one-slot piece of the
    /// request already exceeds the split threshold.
    Indivisible,
    Unexplained,
}

pub fn classify(schedule: &Schedule, opt_cm: f64, k: u32) -> ViolationCause {
    let largest = schedule.assignments.iter().map(|a| a.segment.capacity_makespan()).fold(0.0, f64::max);
    if schedule.forced_placements > 0 {
        ViolationCause::CapacityForced
    } else if largest > opt_cm / f64::from(k) + CAPACITY_EPSILON {
        ViolationCause::Indivisible
    } else {
        ViolationCause::Unexplained
    }
}

fn ratio_property<A>(name: String, report: RatioReport, rerun: A, k: u32) -> Result<PropertyResult>
where
    A: Fn(&[VmRequest], usize) -> Result<Schedule>,
{
    let mut result = PropertyResult::new(name);
    result.checked = report.evaluated;
    let mut causes = [0usize; 3];
    for RatioViolation { instance_json, m, opt_cm, .. } in &report.violations {
        let requests = crate::workload::requests_from_json(instance_json)?;
        let cause = classify(&rerun(&requests, *m)?, *opt_cm, k);
        causes[cause as usize] += 1;
        result.violations += 1;
        if cause != ViolationCause::Unexplained {
            result.explained += 1;
        }
        if result.counterexample.is_none() || cause == ViolationCause::Unexplained {
            result.counterexample = Some(format!("m={m} opt={opt_cm} cause={cause:?}\n{instance_json}"));
        }
    }
    result.detail = format!(
        "max ratio {:.4}, mean {:.4}; {} drawn, skipped {} infeasible, {} with rejections; violations: {} capacity-forced, {} indivisible, {} unexplained",
        report.max_ratio,
        report.mean_ratio(),
        report.drawn,
        report.skipped_infeasible,
        report.skipped_rejected,
        causes[0],
        causes[1],
        causes[2]
    );
    Ok(result)
}

/// Offline Prepartition against `(1 + 1/k) * OPT`.
pub fn offline_ratio(k: u32, trials: usize, seed: u64) -> Result<PropertyResult> {
    let run = move |r: &[VmRequest], m: usize| prepartition(r, &PrepartitionConfig::new(k, m));
    let report = ratio_harness(small_instance, run, |_| 1.0 + 1.0 / f64::from(k), trials, seed)?;
    ratio_property(format!("prepartition k={k} within (1 + 1/k) of optimum"), report, run, k)
}

/// Online Prepartition against `(1 + 1/k - 1/(mk)) * OPT`.
pub fn online_ratio(k: u32, trials: usize, seed: u64) -> Result<PropertyResult> {
    let run = move |r: &[VmRequest], m: usize| prepartition_online(r, m, k);
    let bound = move |m: usize| {
        let k = f64::from(k);
        1.0 + 1.0 / k - 1.0 / (m as f64 * k)
    };
    let report = ratio_harness(small_instance, run, bound, trials, seed)?;
    ratio_property(format!("prepartition_on k={k} within (1 + 1/k - 1/(mk)) of optimum"), report, run, k)
}

/// LPT within 4/3 of optimum when capacity never binds.
pub fn lpt_classical(trials: usize, seed: u64) -> Result<PropertyResult> {
    let report = ratio_harness(classical_instance, lpt, |_| 4.0 / 3.0, trials, seed)?;
    let mut result = PropertyResult::new("lpt within 4/3 of optimum on classical instances");
    result.checked = report.evaluated;
    result.violations = report.violations.len();
    result.counterexample = report.violations.first().map(|v| v.instance_json.clone());
    result.detail = format!("max ratio {:.4}, mean {:.4}", report.max_ratio, report.mean_ratio());
    Ok(result)
}

/// A workload whose requests are long enough that one slot never exceeds
/// the split threshold: Normal durations around three days.
pub fn threshold_instance(rng: &mut impl Rng) -> Result<(Vec<VmRequest>, usize, u32)> {
    let spec = SyntheticSpec {
        n_requests: rng.random_range(20..=200),
        start_window_slots: rng.random_range(0..=2016),
        seed: rng.random(),
        ..SyntheticSpec::default()
    };
    let requests = crate::workload::generate_from_catalog(&spec)?;
    let m = rng.random_range(2..=20);
    let k = rng.random_range(1..=10);
    Ok((requests, m, k))
}

/// Largest segment CM after partitioning stays within the threshold in force
/// when it was cut: `P0 / k` offline, `B_d / k` at arrival online.
pub fn split_thresholds(instances: usize, seed: u64) -> Result<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = PropertyResult::new("split segments respect the threshold");
    let mut indivisible = 0;
    for _ in 0..instances {
        let (requests, m, k) = threshold_instance(&mut rng)?;
        result.checked += 1;
        let dump = || requests_to_json(&requests).unwrap_or_default();

        let plan = prepartition_plan(&requests, &PrepartitionConfig::new(k, m))?;
        let bound = plan.segment_bound;
        for seg in plan.segments.iter().filter(|s| s.is_segment()) {
            if seg.capacity_makespan() > bound.ceil() + CAPACITY_EPSILON {
                result.record(dump);
            }
        }

        // Replay the arrival order to recover B_d / k at each split.
        let schedule = prepartition_online(&requests, m, k)?;
        let mut ctx = OnlineContext::new(m, k)?;
        let mut order: Vec<&VmRequest> = requests.iter().collect();
        order.sort_by_key(|r| (r.start_slot, r.id));
        let by_parent = schedule.segments_by_parent();
        for r in order {
            ctx.arrive(r.capacity_makespan());
            let threshold = ctx.split_threshold()?;
            let Some(segs) = by_parent.get(&r.id) else { continue };
            let one_slot = r.demand;
            for a in segs {
                if a.segment.capacity_makespan() > threshold + CAPACITY_EPSILON {
                    if one_slot > threshold {
                        indivisible += 1;
                    } else {
                        result.record(dump);
                    }
                }
            }
        }
    }
    result.detail = format!("{} instances, {indivisible} segments limited by one-slot granularity", result.checked);
    Ok(result)
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationConfig {
    pub trials: usize,
    pub k_values: Vec<u32>,
    pub capacity_workloads: usize,
    pub max_n: usize,
    pub seed: u64,
    /// Swap in the capacity-blind scheduler for the sweep, to demonstrate the
    /// failure path.
    pub inject_capacity_bug: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { trials: 500, k_values: vec![1, 2, 4, 10], capacity_workloads: 50, max_n: 400, seed: 0, inject_capacity_bug: false }
    }
}

/// Every property in turn.
pub fn validate(config: &ValidationConfig) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    if config.inject_capacity_bug {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut result = PropertyResult::new("per-slot capacity (capacity check removed)");
        for _ in 0..config.capacity_workloads.max(1) {
            let (requests, _) = mixed_catalog_workload(&mut rng, config.max_n)?;
            let m = (requests.len() / 20).max(1);
            let schedule = capacity_blind_lowest_load(&requests, m);
            result.checked += 1;
            if !schedule.check_invariants(&requests).is_empty() {
                result.record(|| requests_to_json(&requests).unwrap_or_default());
            }
        }
        out.push(result);
    } else {
        out.push(capacity_sweep(config.capacity_workloads, config.max_n, config.seed)?);
    }
    out.push(mutation_check(config.seed)?);
    for &k in &config.k_values {
        out.push(offline_ratio(k, config.trials, config.seed)?);
    }
    for &k in &config.k_values {
        out.push(online_ratio(k, config.trials, config.seed)?);
    }
    out.push(lpt_classical(config.trials, config.seed)?);
    out.push(split_thresholds(config.trials.min(200), config.seed)?);
    Ok(out)
}
