//! Fleet-level quality measures computed from a finished [`Schedule`].

use serde::{Deserialize, Serialize};

use crate::domain::{PmState, Schedule};
use crate::error::{Error, Result};

/// Which slots a PM's average utilization is measured over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilizationWindow {
    /// Each PM's load measured against the fleet capacity makespan, so a PM
    /// carrying the heaviest load scores 1.
    #[default]
    CapacityMakespan,
    /// Global first start to global last end, shared by every PM.
    Fleet,
    /// Each PM's own first start to last end.
    BusySpan,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub window: UtilizationWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PmMetrics {
    pub pm_id: usize,
    pub avg_util: f64,
    pub load_cm: f64,
    pub busy_span: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub avg_utilization: f64,
    pub imbalance_degree: f64,
    /// Global last end minus global first start.
    pub makespan_slots: u32,
    /// Longest per-PM busy span.
    pub max_pm_span: u32,
    pub capacity_makespan: f64,
    pub partition_count: usize,
    pub migration_count: usize,
    pub rejected: usize,
    pub wall_clock_ms: f64,
    /// Set when nothing was placed; every other figure is then zero.
    pub empty: bool,
    pub per_pm: Vec<PmMetrics>,
}

/// Mean slot usage of `pm` over `[window.0, window.1)`.
pub fn pm_avg_utilization(pm: &PmState, window: (u32, u32)) -> Result<f64> {
    let (start, end) = window;
    if start >= end || end > pm.horizon_slots() {
        return Err(Error::EmptyWindow { start, end });
    }
    let used: f64 = pm.slot_usage()[start as usize..end as usize].iter().sum();
    Ok(used / f64::from(end - start))
}

/// Share of the fleet capacity makespan that a PM's load fills.
pub fn load_utilization(load_cm: f64, capacity_makespan: f64) -> f64 {
    if capacity_makespan <= 0.0 {
        0.0
    } else {
        load_cm / capacity_makespan
    }
}

/// Standard deviation over mean; zero for an all-zero or empty sample.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

pub fn fleet_metrics(schedule: &Schedule, config: &MetricsConfig) -> MetricsReport {
    let partition_count = schedule.partition_count;
    let migration_count = schedule.migration_count();
    let rejected = schedule.rejected.len();

    let fleet_window = schedule
        .pm_states
        .iter()
        .filter_map(PmState::busy_span)
        .reduce(|(s0, e0), (s1, e1)| (s0.min(s1), e0.max(e1)));
    let Some(fleet_window) = fleet_window else {
        return MetricsReport {
            avg_utilization: 0.0,
            imbalance_degree: 0.0,
            makespan_slots: 0,
            max_pm_span: 0,
            capacity_makespan: 0.0,
            partition_count,
            migration_count,
            rejected,
            wall_clock_ms: 0.0,
            empty: true,
            per_pm: Vec::new(),
        };
    };

    let capacity_makespan = schedule.capacity_makespan();
    let per_pm: Vec<PmMetrics> = schedule
        .pm_states
        .iter()
        .filter_map(|pm| {
            let span = pm.busy_span()?;
            let window = match config.window {
                UtilizationWindow::CapacityMakespan => None,
                UtilizationWindow::Fleet => Some(fleet_window),
                UtilizationWindow::BusySpan => Some(span),
            };
            let avg_util = match window {
                Some(w) => pm_avg_utilization(pm, w).expect("window lies inside the ledger"),
                None => load_utilization(pm.load_cm(), capacity_makespan),
            };
            Some(PmMetrics {
                pm_id: pm.id(),
                avg_util,
                load_cm: pm.load_cm(),
                busy_span: span.1 - span.0,
            })
        })
        .collect();

    let utils: Vec<f64> = per_pm.iter().map(|p| p.avg_util).collect();
    MetricsReport {
        avg_utilization: utils.iter().sum::<f64>() / utils.len() as f64,
        imbalance_degree: coefficient_of_variation(&utils),
        makespan_slots: fleet_window.1 - fleet_window.0,
        max_pm_span: per_pm.iter().map(|p| p.busy_span).max().unwrap_or(0),
        capacity_makespan,
        partition_count,
        migration_count,
        rejected,
        wall_clock_ms: 0.0,
        empty: false,
        per_pm,
    }
}
