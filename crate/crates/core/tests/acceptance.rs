//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails for a reason that is not a documented
//! limit of the model.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use prepartition::experiment::{run_experiment, run_job, ExperimentConfig, ResultTable, WorkloadSource};
use prepartition::metrics::{fleet_metrics, MetricsConfig};
use prepartition::validation::{
    capacity_sweep, lpt_classical, offline_ratio, online_ratio, split_thresholds, PropertyResult,
};
use prepartition::workload::{generate_from_catalog, SyntheticSpec};
use prepartition::{Algorithm, RunParams, VmRequest};

const SEED: u64 = 0;

const CAPACITY_WORKLOADS: usize = 250;
const CAPACITY_MAX_N: usize = 2000;
const CAPACITY_MIN_RUNS: usize = 1000;
const CAPACITY_TIME_LIMIT: Duration = Duration::from_secs(120);

const RATIO_TRIALS: usize = 500;
const RATIO_K: [u32; 4] = [1, 2, 4, 10];
const RATIO_TIME_LIMIT: Duration = Duration::from_secs(300);

const SPLIT_INSTANCES: usize = 200;

const TREND_N: [usize; 4] = [100, 200, 400, 1600];
const TREND_BATCHES: u64 = 10;
const TREND_REPEATS: u32 = 10;
const TREND_MIN_BATCHES: usize = 9;
const TREND_MIN_ADVANTAGE: f64 = 0.05;
const TREND_K: u32 = 4;
/// Trend fleets hold one PM per this many requests.
const TREND_VMS_PER_PM: usize = 6;
const TREND_TIME_LIMIT: Duration = Duration::from_secs(600);

const SWEEP_N: usize = 400;
/// The k sweep runs where `P0 / k` cuts typical requests.
const SWEEP_VMS_PER_PM: usize = 2;
const SWEEP_OFFLINE_K: [u32; 3] = [4, 8, 10];
const SWEEP_ONLINE_K: [u32; 3] = [2, 3, 4];
const SWEEP_TIMING_RUNS: usize = 5;

const SCALING_N: [usize; 3] = [10_000, 20_000, 40_000];
const SCALING_M: usize = 50;
const SCALING_RUNS: usize = 7;
const SCALING_MAX_FACTOR: f64 = 3.0;

const CLASSICAL_TRIALS: usize = 300;

const GOLDEN: &str = "tests/golden/determinism.csv";

struct Outcome {
    id: u8,
    title: &'static str,
    passed: bool,
    /// A failure caused by a limit of the model that is written up in the
    /// decisions ledger.
    documented: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new(id: u8, title: &'static str) -> Self {
        Self { id, title, passed: true, documented: false, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }
}

fn property_line(r: &PropertyResult) -> String {
    format!("{}: {} checked, {} violations ({} explained); {}", r.name, r.checked, r.violations, r.explained, r.detail)
}

fn capacity() -> Outcome {
    let mut out = Outcome::new(1, "per-slot capacity never exceeded");
    let t = Instant::now();
    let r = capacity_sweep(CAPACITY_WORKLOADS, CAPACITY_MAX_N, SEED).expect("capacity sweep");
    let elapsed = t.elapsed();
    out.check(r.clean() && r.checked >= CAPACITY_MIN_RUNS, property_line(&r));
    out.check(elapsed < CAPACITY_TIME_LIMIT, format!("{elapsed:.1?} (limit {CAPACITY_TIME_LIMIT:?})"));
    if let Some(c) = &r.counterexample {
        out.note(format!("counterexample: {c}"));
    }
    out
}

fn ratio(id: u8, title: &'static str, run: fn(u32, usize, u64) -> prepartition::Result<PropertyResult>) -> Outcome {
    let mut out = Outcome::new(id, title);
    let t = Instant::now();
    let mut all_explained = true;
    for k in RATIO_K {
        let r = run(k, RATIO_TRIALS, SEED).expect("ratio harness");
        all_explained &= r.passed();
        out.check(r.clean(), property_line(&r));
        if !r.passed() {
            if let Some(c) = &r.counterexample {
                out.note(format!("unexplained counterexample: {c}"));
            }
        }
    }
    let elapsed = t.elapsed();
    out.check(elapsed < RATIO_TIME_LIMIT, format!("{elapsed:.1?} (limit {RATIO_TIME_LIMIT:?})"));
    out.documented = !out.passed && all_explained && elapsed < RATIO_TIME_LIMIT;
    out
}

fn splits() -> Outcome {
    let mut out = Outcome::new(4, "split segments respect the threshold");
    let r = split_thresholds(SPLIT_INSTANCES, SEED).expect("split check");
    out.check(r.clean(), property_line(&r));
    out
}

fn trend_config(n: usize, batch: u64) -> ExperimentConfig {
    ExperimentConfig {
        workload: WorkloadSource::Synthetic(SyntheticSpec { n_requests: n, ..SyntheticSpec::default() }),
        algorithms: Algorithm::ALL.to_vec(),
        m: n.div_ceil(TREND_VMS_PER_PM),
        k_values: vec![TREND_K],
        repeats: TREND_REPEATS,
        seed: SEED + batch * 1000,
        record_timing: false,
        ..ExperimentConfig::default()
    }
}

struct Means {
    util: Vec<f64>,
    cm: Vec<f64>,
}

fn means(table: &ResultTable) -> Means {
    let row = |a: Algorithm| table.aggregate(a, a.uses_k().then_some(TREND_K)).expect("aggregate row");
    Means {
        util: Algorithm::ALL.iter().map(|&a| row(a).avg_util).collect(),
        cm: Algorithm::ALL.iter().map(|&a| row(a).capacity_makespan).collect(),
    }
}

fn idx(a: Algorithm) -> usize {
    Algorithm::ALL.iter().position(|&b| b == a).unwrap()
}

fn trends() -> (Outcome, Outcome) {
    use Algorithm::*;
    let mut offline = Outcome::new(5, "offline utilization ordering");
    let mut online = Outcome::new(6, "online utilization and capacity_makespan ordering");
    let t = Instant::now();
    for n in TREND_N {
        let batches: Vec<Means> = (0..TREND_BATCHES)
            .map(|b| means(&run_experiment(&trend_config(n, b)).expect("trend experiment")))
            .collect();
        let u = |m: &Means, a| m.util[idx(a)];
        let c = |m: &Means, a| m.cm[idx(a)];
        let off_ok = batches
            .iter()
            .filter(|m| u(m, Prepartition) > u(m, Pmg) && u(m, Pmg) >= u(m, Lpt) && u(m, Lpt) > u(m, RoundRobin))
            .count();
        let on_ok = batches
            .iter()
            .filter(|m| {
                u(m, PrepartitionOnline) > u(m, Olrsa)
                    && u(m, Olrsa) > u(m, RoundRobinOnline).max(u(m, Random))
                    && c(m, PrepartitionOnline) < c(m, Olrsa)
            })
            .count();
        let grand = |a| batches.iter().map(|m| u(m, a)).sum::<f64>() / batches.len() as f64;
        let off_gain = grand(Prepartition) / grand(Lpt) - 1.0;
        let on_gain = grand(PrepartitionOnline) / grand(Olrsa) - 1.0;
        offline.check(
            off_ok >= TREND_MIN_BATCHES && off_gain >= TREND_MIN_ADVANTAGE,
            format!(
                "n={n} m={}: ordering in {off_ok}/{TREND_BATCHES} batches; utilization prepartition {:.3} pmg {:.3} \
                 lpt {:.3} rr {:.3}; +{:.1}% over lpt",
                n.div_ceil(TREND_VMS_PER_PM),
                grand(Prepartition),
                grand(Pmg),
                grand(Lpt),
                grand(RoundRobin),
                100.0 * off_gain
            ),
        );
        online.check(
            on_ok >= TREND_MIN_BATCHES && on_gain >= TREND_MIN_ADVANTAGE,
            format!(
                "n={n} m={}: ordering in {on_ok}/{TREND_BATCHES} batches; utilization prepartition_on {:.3} olrsa {:.3} \
                 rr_on {:.3} random {:.3}; +{:.1}% over olrsa",
                n.div_ceil(TREND_VMS_PER_PM),
                grand(PrepartitionOnline),
                grand(Olrsa),
                grand(RoundRobinOnline),
                grand(Random),
                100.0 * on_gain
            ),
        );
    }
    let elapsed = t.elapsed();
    offline.check(elapsed < TREND_TIME_LIMIT, format!("{elapsed:.1?} for both orderings (limit {TREND_TIME_LIMIT:?})"));
    (offline, online)
}

struct SweepPoint {
    k: u32,
    imbalance: f64,
    cm: f64,
    partitions: usize,
    best_ms: f64,
}

fn sweep(algorithm: Algorithm, requests: &[VmRequest], m: usize, ks: &[u32]) -> Vec<SweepPoint> {
    ks.iter()
        .map(|&k| {
            let params = RunParams::new(m, k, SEED);
            let mut best_ms = f64::INFINITY;
            let mut schedule = None;
            for _ in 0..SWEEP_TIMING_RUNS {
                let t = Instant::now();
                let s = algorithm.run(requests, &params).expect("sweep run");
                best_ms = best_ms.min(t.elapsed().as_secs_f64() * 1e3);
                schedule = Some(s);
            }
            let report = fleet_metrics(&schedule.unwrap(), &MetricsConfig::default());
            SweepPoint {
                k,
                imbalance: report.imbalance_degree,
                cm: report.capacity_makespan,
                partitions: report.partition_count,
                best_ms,
            }
        })
        .collect()
}

fn weakly(points: &[SweepPoint], f: impl Fn(&SweepPoint) -> f64, decreasing: bool) -> bool {
    points.windows(2).all(|w| {
        let (a, b) = (f(&w[0]), f(&w[1]));
        if decreasing {
            b <= a + 1e-9
        } else {
            b + 1e-9 >= a
        }
    })
}

fn describe(points: &[SweepPoint]) -> String {
    let base = points[0].best_ms;
    points
        .iter()
        .map(|p| {
            format!(
                "k={} imbalance {:.4} cm {:.1} partitions {} time {:+.0}%",
                p.k,
                p.imbalance,
                p.cm,
                p.partitions,
                100.0 * (p.best_ms / base - 1.0)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn k_sweep() -> Outcome {
    let mut out = Outcome::new(7, "larger k balances better at the cost of partitions");
    let requests = generate_from_catalog(&SyntheticSpec { n_requests: SWEEP_N, seed: SEED, ..SyntheticSpec::default() })
        .expect("sweep workload");
    let m = SWEEP_N.div_ceil(SWEEP_VMS_PER_PM);
    for (algorithm, ks) in [(Algorithm::Prepartition, &SWEEP_OFFLINE_K), (Algorithm::PrepartitionOnline, &SWEEP_ONLINE_K)] {
        let points = sweep(algorithm, &requests, m, ks);
        out.check(
            weakly(&points, |p| p.partitions as f64, false),
            format!("{algorithm} n={SWEEP_N} m={m} partition count: {}", describe(&points)),
        );
        out.check(weakly(&points, |p| p.imbalance, true), format!("{algorithm} imbalance weakly decreasing"));
        out.check(weakly(&points, |p| p.cm, true), format!("{algorithm} capacity_makespan weakly decreasing"));
        if !weakly(&points, |p| p.best_ms, false) {
            out.note(format!("{algorithm} wall clock not monotone (not gated)"));
        }
    }
    // The trend fleet for comparison: already within a few percent of
    // balanced at k = 4, where capacity rather than k decides the spread.
    let m = SWEEP_N.div_ceil(TREND_VMS_PER_PM);
    let points = sweep(Algorithm::Prepartition, &requests, m, &SWEEP_OFFLINE_K);
    out.note(format!("not gated, prepartition m={m}: {}", describe(&points)));
    out
}

fn scaling_workload(n: usize) -> Vec<VmRequest> {
    // Starts spread in proportion to n keep the number of concurrent VMs,
    // and so the fleet's headroom, the same at every size.
    let spec = SyntheticSpec {
        n_requests: n,
        duration_mean_slots: 48.0,
        duration_std_slots: 16.0,
        start_window_slots: n as u32,
        horizon_slots: 192,
        seed: SEED,
        ..SyntheticSpec::default()
    };
    generate_from_catalog(&spec).expect("scaling workload")
}

fn scaling() -> Outcome {
    let mut out = Outcome::new(8, "doubling n at most triples running time");
    let workloads: Vec<Vec<VmRequest>> = SCALING_N.iter().map(|&n| scaling_workload(n)).collect();
    for algorithm in [Algorithm::Prepartition, Algorithm::PrepartitionOnline] {
        let params = RunParams::new(SCALING_M, TREND_K, SEED);
        let mut best = vec![f64::INFINITY; workloads.len()];
        // Interleave sizes so drift in machine load hits all of them.
        for _ in 0..SCALING_RUNS {
            for (i, w) in workloads.iter().enumerate() {
                let t = Instant::now();
                let s = algorithm.run(w, &params).expect("scaling run");
                best[i] = best[i].min(t.elapsed().as_secs_f64() * 1e3);
                assert!(s.rejected.is_empty(), "scaling fleet too small");
            }
        }
        let factors: Vec<f64> = best.windows(2).map(|w| w[1] / w[0]).collect();
        out.check(
            factors.iter().all(|&f| f <= SCALING_MAX_FACTOR),
            format!(
                "{algorithm} m={SCALING_M}: {} ms; doubling factors {}",
                best.iter().map(|b| format!("{b:.1}")).collect::<Vec<_>>().join(" / "),
                factors.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>().join(", ")
            ),
        );
    }
    out
}

fn classical() -> Outcome {
    let mut out = Outcome::new(9, "lpt within 4/3 on classical instances");
    let r = lpt_classical(CLASSICAL_TRIALS, SEED).expect("lpt check");
    out.check(r.clean(), property_line(&r));
    out
}

fn determinism_config() -> ExperimentConfig {
    ExperimentConfig {
        workload: WorkloadSource::Synthetic(SyntheticSpec { n_requests: 60, ..SyntheticSpec::default() }),
        algorithms: Algorithm::ALL.to_vec(),
        m: 10,
        k_values: vec![2, 4],
        repeats: 3,
        seed: 11,
        record_timing: false,
        ..ExperimentConfig::default()
    }
}

fn csv(table: &ResultTable) -> String {
    let mut buf = Vec::new();
    table.write_csv(&mut buf).expect("csv");
    String::from_utf8(buf).unwrap()
}

fn determinism() -> Outcome {
    let mut out = Outcome::new(10, "rows reproduce byte for byte");
    let config = determinism_config();
    let first = run_experiment(&config).expect("experiment");
    let second = run_experiment(&config).expect("experiment");
    let text = csv(&first);
    out.check(text == csv(&second), "two full runs give identical tables".into());

    let mut mismatched = 0;
    for (job, row) in config.jobs().into_iter().zip(&first.raw) {
        let requests = config.workload_for(job.repeat).expect("workload");
        let again = run_job(&config, job, &requests).expect("job");
        mismatched += usize::from(again.cells() != row.cells());
    }
    out.check(mismatched == 0, format!("{} rows rerun alone, {mismatched} differ", first.raw.len()));

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, &text).expect("writing golden file");
    }
    let golden = std::fs::read_to_string(&path).unwrap_or_default();
    out.check(golden == text, format!("table matches {GOLDEN}"));
    out
}

fn main() -> ExitCode {
    let mut outcomes = Vec::new();
    let mut run = |f: &dyn Fn() -> Vec<Outcome>| {
        for o in f() {
            let status = match (o.passed, o.documented) {
                (true, _) => "PASS",
                (false, true) => "FAIL (documented)",
                (false, false) => "FAIL",
            };
            println!("criterion {:2} {status}: {}", o.id, o.title);
            for line in &o.lines {
                println!("    {line}");
            }
            outcomes.push(o);
        }
    };
    run(&|| vec![capacity()]);
    run(&|| vec![ratio(2, "offline prepartition within (1 + 1/k) of optimum", offline_ratio)]);
    run(&|| vec![ratio(3, "online prepartition within (1 + 1/k - 1/(mk)) of optimum", online_ratio)]);
    run(&|| vec![splits()]);
    run(&|| {
        let (a, b) = trends();
        vec![a, b]
    });
    run(&|| vec![k_sweep()]);
    run(&|| vec![scaling()]);
    run(&|| vec![classical()]);
    run(&|| vec![determinism()]);

    let passed = outcomes.iter().filter(|o| o.passed).count();
    let documented = outcomes.iter().filter(|o| !o.passed && o.documented).count();
    let failed = outcomes.len() - passed - documented;
    println!("{passed} passed, {documented} failed with documented cause, {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
