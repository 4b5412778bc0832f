//! Request sources: Standard Workload Format traces, the Normal-distribution
//! synthetic generator, and the EC2-style VM/PM catalogs.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::domain::{PmCatalogEntry, SlotConfig, VmCatalogEntry, VmRequest};
use crate::error::{Error, Result};

/// The eight VM types: compute units, memory GB, storage GB.
pub fn vm_catalog() -> Vec<VmCatalogEntry> {
    [
        ("1-1", 1.0, 1.875, 211.25),
        ("1-2", 4.0, 7.5, 845.0),
        ("1-3", 8.0, 15.0, 1690.0),
        ("2-1", 6.5, 17.1, 422.5),
        ("2-2", 13.0, 34.2, 845.0),
        ("2-3", 26.0, 68.4, 1690.0),
        ("3-1", 5.0, 1.875, 422.5),
        ("3-2", 20.0, 7.0, 1690.0),
    ]
    .into_iter()
    .map(|(label, cu, mem, sto)| VmCatalogEntry::new(label, cu, mem, sto))
    .collect()
}

/// The three PM pool types.
pub fn pm_catalog() -> Vec<PmCatalogEntry> {
    [("Type 1", 16.0, 30.0, 3380.0), ("Type 2", 52.0, 136.8, 3380.0), ("Type 3", 40.0, 14.0, 3380.0)]
        .into_iter()
        .map(|(label, cu, mem, sto)| PmCatalogEntry::new(label, cu, mem, sto))
        .collect()
}

pub fn catalogs() -> (Vec<VmCatalogEntry>, Vec<PmCatalogEntry>) {
    (vm_catalog(), pm_catalog())
}

pub fn vm_type(label: &str) -> Option<VmCatalogEntry> {
    vm_catalog().into_iter().find(|v| v.label == label)
}

/// Accepts `"Type 2"`, `"type2"`, or just `"2"`.
pub fn pm_type(label: &str) -> Option<PmCatalogEntry> {
    let wanted: String = label.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    pm_catalog().into_iter().find(|p| {
        let norm = p.label.replace(' ', "").to_lowercase();
        norm == wanted || norm.trim_start_matches("type") == wanted
    })
}

/// The four SWF fields the simulator uses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub job_id: u64,
    pub submit_time_s: u64,
    pub run_time_s: u64,
    pub allocated_processors: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SwfTrace {
    pub records: Vec<TraceRecord>,
    /// Lines dropped for unknown or non-positive run time or processor count.
    pub skipped: usize,
    /// `MaxProcs` from the comment header, when present.
    pub max_procs: Option<u32>,
}

impl SwfTrace {
    /// Header `MaxProcs`, else the widest job seen.
    pub fn cluster_procs(&self) -> Option<u32> {
        self.max_procs.or_else(|| self.records.iter().map(|r| r.allocated_processors).max())
    }
}

const SWF_FIELDS: usize = 18;

pub fn parse_swf<R: BufRead>(reader: R) -> Result<SwfTrace> {
    let mut trace = SwfTrace::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix(';') {
            if let Some((key, value)) = comment.split_once(':') {
                if key.trim().eq_ignore_ascii_case("MaxProcs") {
                    trace.max_procs = value.trim().parse().ok().filter(|&p| p > 0);
                }
            }
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split_whitespace()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    reason: format!("field {f:?} is not numeric"),
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() < SWF_FIELDS {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected {SWF_FIELDS} fields, found {}", fields.len()),
            });
        }
        let (job, submit, run, procs) = (fields[0], fields[1], fields[3], fields[4]);
        if job < 0.0 || job.fract() != 0.0 {
            return Err(Error::Parse { line: lineno, reason: format!("bad job id {job}") });
        }
        if run <= 0.0 || procs <= 0.0 || submit < 0.0 {
            trace.skipped += 1;
            continue;
        }
        trace.records.push(TraceRecord {
            job_id: job as u64,
            submit_time_s: submit as u64,
            run_time_s: run.ceil() as u64,
            allocated_processors: procs.ceil() as u32,
        });
    }
    Ok(trace)
}

pub fn read_swf(path: impl AsRef<Path>) -> Result<SwfTrace> {
    let file = std::fs::File::open(path)?;
    parse_swf(std::io::BufReader::new(file))
}

/// Writes records as SWF lines; fields the simulator ignores are `-1`.
pub fn write_swf(records: &[TraceRecord]) -> String {
    let mut out = String::from("; Version: 2.2\n");
    for r in records {
        let _ = write!(
            out,
            "{} {} -1 {} {} -1 -1 {}",
            r.job_id, r.submit_time_s, r.run_time_s, r.allocated_processors, r.allocated_processors
        );
        out.push_str(&" -1".repeat(SWF_FIELDS - 6));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceConversion {
    pub requests: Vec<VmRequest>,
    /// Jobs needing more processors than the cluster has.
    pub oversized: Vec<u64>,
    /// Jobs ending after the slot horizon.
    pub beyond_horizon: Vec<u64>,
}

/// Maps trace jobs onto slots: start rounds down, duration rounds up with a
/// one-slot minimum, demand is the processor share of the cluster.
pub fn trace_to_requests(
    records: &[TraceRecord],
    slots: &SlotConfig,
    cluster_procs: u32,
) -> Result<TraceConversion> {
    if cluster_procs == 0 {
        return Err(Error::InvalidConfig("cluster processor count must be positive".into()));
    }
    let slot_s = slots.slot_seconds();
    let mut out = TraceConversion::default();
    for r in records {
        let demand = f64::from(r.allocated_processors) / f64::from(cluster_procs);
        if demand > 1.0 {
            out.oversized.push(r.job_id);
            continue;
        }
        let start = r.submit_time_s / slot_s;
        let duration = r.run_time_s.div_ceil(slot_s).max(1);
        let end = start + duration;
        if end > u64::from(slots.horizon_slots) {
            out.beyond_horizon.push(r.job_id);
            continue;
        }
        out.requests.push(VmRequest::new(r.job_id, start as u32, end as u32, demand)?);
    }
    if !out.oversized.is_empty() {
        log::warn!("{} trace jobs exceed {cluster_procs} processors", out.oversized.len());
    }
    Ok(out)
}

/// Slot horizon that covers every record of a trace.
pub fn trace_horizon(records: &[TraceRecord], slots_minutes: u32) -> u32 {
    let slot_s = u64::from(slots_minutes) * 60;
    records
        .iter()
        .map(|r| r.submit_time_s / slot_s + r.run_time_s.div_ceil(slot_s).max(1))
        .max()
        .unwrap_or(1)
        .min(u64::from(u32::MAX)) as u32
}

/// Parameters of the Normal-duration synthetic workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_requests: usize,
    pub duration_mean_slots: f64,
    pub duration_std_slots: f64,
    /// Starts are uniform over `[0, start_window_slots]`.
    pub start_window_slots: u32,
    /// Durations are clamped to `[1, horizon_slots]`.
    pub horizon_slots: u32,
    /// One weight per VM catalog entry.
    pub vm_type_weights: Vec<f64>,
    pub pm_type: String,
    /// Attach memory/storage fractions for fleets running the secondary gate.
    pub attach_secondary: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_requests: 400,
            // three days mean, one day deviation, starts over one week
            duration_mean_slots: 864.0,
            duration_std_slots: 288.0,
            start_window_slots: 2016,
            horizon_slots: 8064,
            vm_type_weights: vec![1.0; 8],
            pm_type: "Type 2".into(),
            attach_secondary: false,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.duration_mean_slots.is_nan() || self.duration_mean_slots <= 0.0 {
            return bad(format!("duration mean {} must be positive", self.duration_mean_slots));
        }
        if self.duration_std_slots.is_nan() || self.duration_std_slots < 0.0 {
            return bad(format!("duration std {} must be non-negative", self.duration_std_slots));
        }
        if self.horizon_slots == 0 {
            return bad("horizon must be at least one slot".into());
        }
        if self.vm_type_weights.iter().any(|w| w.is_nan() || *w < 0.0) || self.vm_type_weights.iter().sum::<f64>() <= 0.0 {
            return bad("VM type weights must be non-negative with a positive sum".into());
        }
        Ok(())
    }

    /// Weights scaled to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.vm_type_weights.iter().sum();
        self.vm_type_weights.iter().map(|w| w / total).collect()
    }
}

/// Draws `spec.n_requests` requests against the given catalogs.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    vms: &[VmCatalogEntry],
    pm: &PmCatalogEntry,
) -> Result<Vec<VmRequest>> {
    spec.validate()?;
    if spec.vm_type_weights.len() != vms.len() {
        return Err(Error::InvalidConfig(format!(
            "{} VM type weights for {} catalog entries",
            spec.vm_type_weights.len(),
            vms.len()
        )));
    }
    let demands: Vec<f64> = vms
        .iter()
        .zip(&spec.vm_type_weights)
        .map(|(vm, &w)| if w > 0.0 { vm.demand_on(pm) } else { Ok(f64::NAN) })
        .collect::<Result<_>>()?;
    let picker = WeightedIndex::new(&spec.vm_type_weights)
        .map_err(|e| Error::InvalidConfig(format!("VM type weights: {e}")))?;
    let durations = Normal::new(spec.duration_mean_slots, spec.duration_std_slots)
        .map_err(|e| Error::InvalidConfig(format!("duration distribution: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max_len = f64::from(spec.horizon_slots);
    (0..spec.n_requests)
        .map(|i| {
            let duration = durations.sample(&mut rng).round().clamp(1.0, max_len) as u32;
            let start = rng.random_range(0..=spec.start_window_slots);
            let ty = picker.sample(&mut rng);
            let mut req = VmRequest::new(i as u64, start, start + duration, demands[ty])?
                .with_vm_type(vms[ty].label.clone());
            if spec.attach_secondary {
                req = req.with_secondary(vms[ty].secondary_on(pm));
                req.validate()?;
            }
            Ok(req)
        })
        .collect()
}

/// [`generate_synthetic`] against the built-in catalogs and `spec.pm_type`.
pub fn generate_from_catalog(spec: &SyntheticSpec) -> Result<Vec<VmRequest>> {
    let pm = pm_type(&spec.pm_type)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown PM type {:?}", spec.pm_type)))?;
    generate_synthetic(spec, &vm_catalog(), &pm)
}

/// Canonical request-list JSON: `id, start_slot, end_slot, demand, vm_type`.
pub fn requests_to_json(requests: &[VmRequest]) -> Result<String> {
    #[derive(Serialize)]
    struct Canonical<'a> {
        id: u64,
        start_slot: u32,
        end_slot: u32,
        demand: f64,
        vm_type: Option<&'a str>,
    }
    let rows: Vec<Canonical> = requests
        .iter()
        .map(|r| Canonical {
            id: r.id,
            start_slot: r.start_slot,
            end_slot: r.end_slot,
            demand: r.demand,
            vm_type: r.vm_type.as_deref(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rows)?)
}

pub fn requests_from_json(text: &str) -> Result<Vec<VmRequest>> {
    let requests: Vec<VmRequest> = serde_json::from_str(text)?;
    crate::domain::validate_requests(&requests)?;
    Ok(requests)
}
