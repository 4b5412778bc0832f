//! Flat TOML run files and `key=value` synthetic specs, merged with flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use prepartition::experiment::{ExperimentConfig, WorkloadSource};
use prepartition::metrics::{MetricsConfig, UtilizationWindow};
use prepartition::offline::{PmgConfig, VictimOrder};
use prepartition::workload::SyntheticSpec;
use prepartition::Algorithm;
use serde::Deserialize;

/// Every key a run file may set. Command-line flags win over these.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub synthetic: Option<String>,
    pub trace: Option<PathBuf>,
    pub algos: Option<String>,
    pub m: Option<usize>,
    pub k: Option<Vec<u32>>,
    pub repeats: Option<u32>,
    pub seed: Option<u64>,
    pub slot_minutes: Option<u32>,
    pub cluster_procs: Option<u32>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub window: Option<String>,
    pub record_timing: Option<bool>,
    pub max_rejection_rate: Option<f64>,
    pub pmg_factor: Option<f64>,
    pub pmg_victims: Option<String>,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Parses `n=400,mu=864,sigma=288,window=2016,horizon=8064,pm=2,weights=1:1:1:1:1:1:1:1,secondary=false,seed=0`.
/// Unlisted keys keep their defaults.
pub fn parse_synthetic(text: &str) -> Result<SyntheticSpec> {
    let mut spec = SyntheticSpec::default();
    for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = pair.split_once('=').with_context(|| format!("expected key=value, got {pair:?}"))?;
        let value = value.trim();
        let bad = || format!("bad value {value:?} for {key}");
        match key.trim() {
            "n" => spec.n_requests = value.parse().with_context(bad)?,
            "mu" | "mean" => spec.duration_mean_slots = value.parse().with_context(bad)?,
            "sigma" | "delta" | "std" => spec.duration_std_slots = value.parse().with_context(bad)?,
            "window" => spec.start_window_slots = value.parse().with_context(bad)?,
            "horizon" => spec.horizon_slots = value.parse().with_context(bad)?,
            "pm" => spec.pm_type = value.to_string(),
            "weights" => {
                spec.vm_type_weights =
                    value.split(':').map(|w| w.trim().parse::<f64>()).collect::<Result<_, _>>().with_context(bad)?
            }
            "secondary" => spec.attach_secondary = value.parse().with_context(bad)?,
            "seed" => spec.seed = value.parse().with_context(bad)?,
            other => bail!("unknown synthetic key {other:?}"),
        }
    }
    Ok(spec)
}

pub fn parse_algos(text: &str) -> Result<Vec<Algorithm>> {
    if text.trim() == "all" {
        return Ok(Algorithm::ALL.to_vec());
    }
    text.split(',').map(|a| a.parse::<Algorithm>().map_err(Into::into)).collect()
}

pub fn parse_window(text: &str) -> Result<UtilizationWindow> {
    Ok(match text {
        "capacity_makespan" | "cm" => UtilizationWindow::CapacityMakespan,
        "fleet" => UtilizationWindow::Fleet,
        "busy_span" | "busy" => UtilizationWindow::BusySpan,
        other => bail!("unknown utilization window {other:?}"),
    })
}

pub fn parse_victims(text: &str) -> Result<VictimOrder> {
    Ok(match text {
        "smallest" | "smallest_first" => VictimOrder::SmallestFirst,
        "largest" | "largest_first" => VictimOrder::LargestFirst,
        other => bail!("unknown victim order {other:?}"),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

pub fn parse_format(text: &str) -> Result<Format> {
    match text {
        "csv" => Ok(Format::Csv),
        "jsonl" | "json" => Ok(Format::Jsonl),
        other => bail!("unknown output format {other:?}"),
    }
}

/// Fully resolved `run` settings.
#[derive(Debug)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// Fills an [`ExperimentConfig`] from the run file, then the flags on top.
pub fn resolve(file: RunFile, flags: RunFile) -> Result<Resolved> {
    macro_rules! pick {
        ($field:ident) => {
            flags.$field.or(file.$field)
        };
    }
    let trace = pick!(trace);
    let synthetic = pick!(synthetic);
    let slot_minutes = pick!(slot_minutes).unwrap_or(5);
    let workload = match (trace, synthetic) {
        (Some(_), Some(_)) => bail!("choose either a synthetic workload or a trace, not both"),
        (Some(path), None) => WorkloadSource::Trace { path, slot_minutes, cluster_procs: pick!(cluster_procs) },
        (None, Some(spec)) => WorkloadSource::Synthetic(parse_synthetic(&spec)?),
        (None, None) => WorkloadSource::Synthetic(SyntheticSpec::default()),
    };
    let defaults = ExperimentConfig::default();
    let mut pmg = PmgConfig::default();
    if let Some(f) = pick!(pmg_factor) {
        pmg.threshold_factor = f;
    }
    if let Some(v) = pick!(pmg_victims) {
        pmg.victim_order = parse_victims(&v)?;
    }
    let window = match pick!(window) {
        Some(w) => parse_window(&w)?,
        None => UtilizationWindow::default(),
    };
    let experiment = ExperimentConfig {
        workload,
        algorithms: match pick!(algos) {
            Some(a) => parse_algos(&a)?,
            None => defaults.algorithms,
        },
        m: pick!(m).unwrap_or(defaults.m),
        k_values: pick!(k).unwrap_or(defaults.k_values),
        repeats: pick!(repeats).unwrap_or(defaults.repeats),
        seed: pick!(seed).unwrap_or(defaults.seed),
        metrics: MetricsConfig { window },
        pmg,
        record_timing: pick!(record_timing).unwrap_or(defaults.record_timing),
        max_rejection_rate: pick!(max_rejection_rate).unwrap_or(defaults.max_rejection_rate),
    };
    experiment.validate()?;
    let format = match pick!(format) {
        Some(f) => parse_format(&f)?,
        None => Format::Csv,
    };
    Ok(Resolved { experiment, out: pick!(out), format })
}
