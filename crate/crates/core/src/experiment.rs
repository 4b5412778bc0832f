//! Algorithm × k × repeat matrices over one workload, flattened into rows.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{Algorithm, RunParams};
use crate::domain::{SlotConfig, VmRequest};
use crate::error::{Error, Result};
use crate::metrics::{fleet_metrics, MetricsConfig};
use crate::offline::PmgConfig;
use crate::workload::{generate_from_catalog, read_swf, trace_horizon, trace_to_requests, SyntheticSpec};

/// CSV header, in column order.
pub const CSV_COLUMNS: [&str; 14] = [
    "algo",
    "n_vms",
    "m_pms",
    "k",
    "seed",
    "avg_util",
    "imbalance",
    "fleet_makespan",
    "max_pm_span",
    "capacity_makespan",
    "partitions",
    "migrations",
    "wall_ms",
    "rejected",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSource {
    Synthetic(SyntheticSpec),
    Trace {
        path: PathBuf,
        slot_minutes: u32,
        /// Falls back to the trace's `MaxProcs` header when absent.
        cluster_procs: Option<u32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub workload: WorkloadSource,
    pub algorithms: Vec<Algorithm>,
    pub m: usize,
    pub k_values: Vec<u32>,
    pub repeats: u32,
    pub seed: u64,
    pub metrics: MetricsConfig,
    pub pmg: PmgConfig,
    /// When off, `wall_ms` is written as zero so reruns compare byte for byte.
    pub record_timing: bool,
    /// Largest tolerated share of rejected requests in any single run.
    pub max_rejection_rate: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            workload: WorkloadSource::Synthetic(SyntheticSpec::default()),
            algorithms: Algorithm::ALL.to_vec(),
            m: 80,
            k_values: vec![4],
            repeats: 10,
            seed: 0,
            metrics: MetricsConfig::default(),
            pmg: PmgConfig::default(),
            record_timing: true,
            max_rejection_rate: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.m == 0 {
            return bad("fleet must contain at least one PM");
        }
        if self.algorithms.iter().any(|a| a.uses_k()) && (self.k_values.is_empty() || self.k_values.contains(&0)) {
            return bad("k values must be non-empty and positive");
        }
        if !(0.0..=1.0).contains(&self.max_rejection_rate) {
            return bad("rejection-rate threshold must lie in [0, 1]");
        }
        self.pmg.validate()?;
        if let WorkloadSource::Synthetic(spec) = &self.workload {
            spec.validate()?;
        }
        Ok(())
    }

    /// Workload for one repeat. Synthetic specs are reseeded with
    /// `seed + repeat`; traces are the same every repeat.
    pub fn workload_for(&self, repeat: u32) -> Result<Vec<VmRequest>> {
        match &self.workload {
            WorkloadSource::Synthetic(spec) => {
                let spec = SyntheticSpec { seed: self.run_seed(repeat), ..spec.clone() };
                generate_from_catalog(&spec)
            }
            WorkloadSource::Trace { path, slot_minutes, cluster_procs } => {
                let trace = read_swf(path)?;
                let procs = cluster_procs.or(trace.cluster_procs()).ok_or_else(|| {
                    Error::InvalidConfig("trace is empty; pass a cluster size".into())
                })?;
                let slots = SlotConfig::new(*slot_minutes, trace_horizon(&trace.records, *slot_minutes))?;
                let converted = trace_to_requests(&trace.records, &slots, procs)?;
                if !converted.oversized.is_empty() {
                    log::warn!("dropped {} jobs wider than the cluster", converted.oversized.len());
                }
                Ok(converted.requests)
            }
        }
    }

    pub fn run_seed(&self, repeat: u32) -> u64 {
        self.seed.wrapping_add(u64::from(repeat))
    }

    /// Every (algorithm, k, repeat) triple, in output order. Algorithms that
    /// ignore k run once per repeat with `k = None`.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &algorithm in &self.algorithms {
            let ks: Vec<Option<u32>> =
                if algorithm.uses_k() { self.k_values.iter().map(|&k| Some(k)).collect() } else { vec![None] };
            for k in ks {
                for repeat in 0..self.repeats {
                    jobs.push(Job { algorithm, k, repeat });
                }
            }
        }
        jobs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Job {
    pub algorithm: Algorithm,
    pub k: Option<u32>,
    pub repeat: u32,
}

/// One output row. Aggregate rows carry `seed = "mean"` and column means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub algo: String,
    pub n_vms: f64,
    pub m_pms: usize,
    pub k: Option<u32>,
    pub seed: String,
    pub avg_util: f64,
    pub imbalance: f64,
    pub fleet_makespan: f64,
    pub max_pm_span: f64,
    pub capacity_makespan: f64,
    pub partitions: f64,
    pub migrations: f64,
    pub wall_ms: f64,
    pub rejected: f64,
}

impl ResultRow {
    pub fn is_aggregate(&self) -> bool {
        self.seed == "mean"
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.n_vms > 0.0 {
            self.rejected / self.n_vms
        } else {
            0.0
        }
    }

    fn numbers(&self) -> [f64; 10] {
        [
            self.n_vms,
            self.avg_util,
            self.imbalance,
            self.fleet_makespan,
            self.max_pm_span,
            self.capacity_makespan,
            self.partitions,
            self.migrations,
            self.wall_ms,
            self.rejected,
        ]
    }

    /// Cells in [`CSV_COLUMNS`] order. Floats use Rust's shortest round-trip
    /// form, so whole numbers print without a fraction.
    pub fn cells(&self) -> Vec<String> {
        let n = self.numbers();
        let mut out = vec![self.algo.clone(), n[0].to_string(), self.m_pms.to_string()];
        out.push(self.k.map(|k| k.to_string()).unwrap_or_default());
        out.push(self.seed.clone());
        out.extend(n[1..].iter().map(f64::to_string));
        out
    }
}

#[derive(Clone, Debug, Default)]
pub struct ResultTable {
    /// Raw rows in job order.
    pub raw: Vec<ResultRow>,
    /// One mean row per (algorithm, k), in first-appearance order.
    pub aggregates: Vec<ResultRow>,
}

impl ResultTable {
    /// Raw rows of each group followed by that group's mean row.
    pub fn rows(&self) -> Vec<&ResultRow> {
        let mut out = Vec::with_capacity(self.raw.len() + self.aggregates.len());
        for agg in &self.aggregates {
            out.extend(self.raw.iter().filter(|r| r.algo == agg.algo && r.k == agg.k));
            out.push(agg);
        }
        out
    }

    pub fn aggregate(&self, algorithm: Algorithm, k: Option<u32>) -> Option<&ResultRow> {
        self.aggregates.iter().find(|r| r.algo == algorithm.name() && r.k == k)
    }

    /// Raw rows whose rejection rate exceeds `threshold`.
    pub fn over_rejection(&self, threshold: f64) -> Vec<&ResultRow> {
        self.raw.iter().filter(|r| r.rejection_rate() > threshold).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for row in self.rows() {
            w.write_record(row.cells())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.rows() {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs one job against an already generated workload.
pub fn run_job(config: &ExperimentConfig, job: Job, requests: &[VmRequest]) -> Result<ResultRow> {
    let seed = config.run_seed(job.repeat);
    let mut params = RunParams::new(config.m, job.k.unwrap_or(1), seed);
    params.pmg = config.pmg;
    let started = Instant::now();
    let schedule = job.algorithm.run(requests, &params)?;
    let wall_ms = if config.record_timing { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let report = fleet_metrics(&schedule, &config.metrics);
    Ok(ResultRow {
        algo: job.algorithm.name().to_string(),
        n_vms: requests.len() as f64,
        m_pms: config.m,
        k: job.k,
        seed: seed.to_string(),
        avg_util: report.avg_utilization,
        imbalance: report.imbalance_degree,
        fleet_makespan: f64::from(report.makespan_slots),
        max_pm_span: f64::from(report.max_pm_span),
        capacity_makespan: report.capacity_makespan,
        partitions: report.partition_count as f64,
        migrations: report.migration_count as f64,
        wall_ms,
        rejected: report.rejected as f64,
    })
}

fn mean_row(group: &[&ResultRow]) -> ResultRow {
    let n = group.len() as f64;
    let mut sums = [0.0; 10];
    for row in group {
        for (s, v) in sums.iter_mut().zip(row.numbers()) {
            *s += v;
        }
    }
    let [n_vms, avg_util, imbalance, fleet_makespan, max_pm_span, capacity_makespan, partitions, migrations, wall_ms, rejected] =
        sums.map(|s| s / n);
    let first = group[0];
    ResultRow {
        algo: first.algo.clone(),
        n_vms,
        m_pms: first.m_pms,
        k: first.k,
        seed: "mean".into(),
        avg_util,
        imbalance,
        fleet_makespan,
        max_pm_span,
        capacity_makespan,
        partitions,
        migrations,
        wall_ms,
        rejected,
    }
}

/// Runs the whole matrix. Jobs execute in parallel; rows come back in job
/// order regardless of completion order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let workloads: Vec<Vec<VmRequest>> =
        (0..config.repeats).into_par_iter().map(|r| config.workload_for(r)).collect::<Result<_>>()?;
    let jobs = config.jobs();
    log::info!("running {} jobs over {} workloads", jobs.len(), workloads.len());
    let raw: Vec<ResultRow> = jobs
        .par_iter()
        .map(|&job| run_job(config, job, &workloads[job.repeat as usize]))
        .collect::<Result<_>>()?;

    let mut aggregates = Vec::new();
    let mut seen: Vec<(String, Option<u32>)> = Vec::new();
    for row in &raw {
        let key = (row.algo.clone(), row.k);
        if seen.contains(&key) {
            continue;
        }
        let group: Vec<&ResultRow> = raw.iter().filter(|r| r.algo == key.0 && r.k == key.1).collect();
        aggregates.push(mean_row(&group));
        seen.push(key);
    }
    Ok(ResultTable { raw, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            workload: WorkloadSource::Synthetic(SyntheticSpec { n_requests: 40, ..SyntheticSpec::default() }),
            algorithms: vec![Algorithm::Lpt, Algorithm::Prepartition],
            m: 8,
            k_values: vec![4],
            repeats: 3,
            record_timing: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn row_counts_follow_the_matrix() {
        let mut cfg = small_config();
        cfg.k_values = vec![2, 4];
        let table = run_experiment(&cfg).unwrap();
        // lpt once per repeat, prepartition per k per repeat
        assert_eq!(table.raw.len(), 3 + 2 * 3);
        assert_eq!(table.aggregates.len(), 3);
        assert_eq!(table.rows().len(), 12);
        assert!(table.aggregate(Algorithm::Lpt, None).is_some());
        assert!(table.aggregate(Algorithm::Prepartition, Some(2)).is_some());
    }

    #[test]
    fn aggregates_are_means_of_raw_rows() {
        let table = run_experiment(&small_config()).unwrap();
        for agg in &table.aggregates {
            let group: Vec<&ResultRow> = table.raw.iter().filter(|r| r.algo == agg.algo && r.k == agg.k).collect();
            let mean = group.iter().map(|r| r.avg_util).sum::<f64>() / group.len() as f64;
            assert!((agg.avg_util - mean).abs() < 1e-9);
            let mean = group.iter().map(|r| r.capacity_makespan).sum::<f64>() / group.len() as f64;
            assert!((agg.capacity_makespan - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn reruns_are_identical() {
        let cfg = small_config();
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_experiment(&cfg).unwrap().write_csv(&mut a).unwrap();
        run_experiment(&cfg).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_row_reproduces_in_isolation() {
        let cfg = small_config();
        let table = run_experiment(&cfg).unwrap();
        let job = Job { algorithm: Algorithm::Prepartition, k: Some(4), repeat: 2 };
        let alone = run_job(&cfg, job, &cfg.workload_for(2).unwrap()).unwrap();
        let matching = table.raw.iter().find(|r| r.algo == "prepartition" && r.seed == alone.seed).unwrap();
        assert_eq!(matching.cells(), alone.cells());
    }

    #[test]
    fn csv_header_and_cells() {
        let table = run_experiment(&small_config()).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[..5], ["lpt", "40", "8", "", "0"]);
        assert!(text.lines().any(|l| l.starts_with("prepartition,40,8,4,mean,")));
    }

    #[test]
    fn jsonl_has_one_object_per_row() {
        let table = run_experiment(&small_config()).unwrap();
        let mut buf = Vec::new();
        table.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), table.rows().len());
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["algo"], "lpt");
    }

    #[test]
    fn invalid_configs_are_refused() {
        let mut cfg = small_config();
        cfg.algorithms.clear();
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small_config();
        cfg.repeats = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.k_values = vec![0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejection_threshold_flags_rows() {
        let mut cfg = small_config();
        cfg.m = 1;
        let table = run_experiment(&cfg).unwrap();
        assert!(!table.over_rejection(0.05).is_empty());
        assert!(table.over_rejection(1.0).is_empty());
    }
}
