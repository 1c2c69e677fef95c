//! Response bodies of the HTTP API.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rtfs_core::{Excursion, Outcome, SdrTrip, UnitId};
use serde::{Deserialize, Serialize};

use crate::engine::OperationalState;

/// Most points a trace is sent with.
pub const MAX_TRANSPORT_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub healthy: bool,
    pub degraded: bool,
    pub alarm: bool,
    pub cycles: u64,
    pub last_cycle_time: Option<DateTime<Utc>>,
    pub last_snapshot_time: Option<DateTime<Utc>>,
    pub newest_snapshot_time: Option<DateTime<Utc>>,
    pub staleness_limit_s: f64,
    pub stale_snapshot: bool,
    pub snapshot_error: Option<String>,
    pub storage_error: Option<String>,
    pub calculation_error: Option<String>,
    pub latest: Option<ResultSummary>,
}

impl StatusView {
    pub fn from_state(s: &OperationalState, staleness_limit_s: f64) -> Self {
        let h = &s.health;
        StatusView {
            healthy: !h.degraded(),
            degraded: h.degraded(),
            alarm: s.alarm,
            cycles: s.cycles,
            last_cycle_time: s.last_cycle_at,
            last_snapshot_time: s.last_snapshot_time,
            newest_snapshot_time: s.newest_snapshot_time,
            staleness_limit_s,
            stale_snapshot: h.stale_snapshot,
            snapshot_error: h.snapshot_error.clone(),
            storage_error: h.storage_error.clone(),
            calculation_error: h.calculation_error.clone(),
            latest: s.latest.as_deref().map(ResultSummary::from),
        }
    }
}

/// Scalar outcome of a simulation, without traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub snapshot_time: DateTime<Utc>,
    pub scenario_label: String,
    pub excursion: Excursion,
    pub nadir_hz: f64,
    pub nadir_time: f64,
    pub zenith_hz: f64,
    pub zenith_time: f64,
    pub ke_sys: f64,
    pub ke_gen: f64,
    pub ke_load: f64,
    pub sdr_tripped_mw: f64,
    pub collapsed: bool,
    pub alarm: bool,
}

impl From<&Outcome> for ResultSummary {
    fn from(r: &Outcome) -> Self {
        ResultSummary {
            snapshot_time: r.snapshot_time,
            scenario_label: r.scenario_label.clone(),
            excursion: r.excursion,
            nadir_hz: r.nadir_hz,
            nadir_time: r.nadir_time,
            zenith_hz: r.zenith_hz,
            zenith_time: r.zenith_time,
            ke_sys: r.ke_sys,
            ke_gen: r.ke_gen,
            ke_load: r.ke_load,
            sdr_tripped_mw: r.sdr_tripped.iter().map(|t| t.amount_mw).sum(),
            collapsed: r.collapsed,
            alarm: r.alarm,
        }
    }
}

/// A result with its traces decimated for transport. All series share the
/// `time` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    #[serde(flatten)]
    pub summary: ResultSummary,
    /// Step of the full-resolution trace, s.
    pub time_step: f64,
    pub original_points: usize,
    pub time: Vec<f64>,
    pub frequency: Vec<f64>,
    pub total_imbalance: Vec<f64>,
    pub load_relief: Vec<f64>,
    pub sdr_total: Vec<f64>,
    pub per_unit_pfr: BTreeMap<UnitId, Vec<f64>>,
    pub sdr_tripped: Vec<SdrTrip<f64>>,
}

impl TransportResult {
    pub fn new(r: &Outcome, max_points: usize) -> Self {
        let f = &r.frequency;
        let keep = decimation_indices(&f.samples, max_points);
        let pick = |v: &[f64]| keep.iter().filter_map(|&i| v.get(i).copied()).collect::<Vec<_>>();
        TransportResult {
            summary: ResultSummary::from(r),
            time_step: f.time_step,
            original_points: f.len(),
            time: keep.iter().map(|&i| f.time_at(i)).collect(),
            frequency: pick(&f.samples),
            total_imbalance: pick(&r.total_imbalance),
            load_relief: pick(&r.load_relief),
            sdr_total: pick(&r.sdr_total),
            per_unit_pfr: r.per_unit_pfr.iter().map(|(k, v)| (k.clone(), pick(v))).collect(),
            sdr_tripped: r.sdr_tripped.clone(),
        }
    }
}

/// Indices kept when decimating `samples` to at most `max_points`.
///
/// The first and last samples are kept, and the rest is split into equal
/// buckets from each of which the minimum and maximum are kept, so the
/// global minimum and maximum samples always survive exactly.
pub fn decimation_indices(samples: &[f64], max_points: usize) -> Vec<usize> {
    let n = samples.len();
    if n <= max_points.max(4) {
        return (0..n).collect();
    }
    let buckets = (max_points - 2) / 2;
    let inner = n - 2;
    let mut keep = Vec::with_capacity(max_points);
    keep.push(0);
    for b in 0..buckets {
        let lo = 1 + b * inner / buckets;
        let hi = 1 + (b + 1) * inner / buckets;
        if lo >= hi {
            continue;
        }
        let (mut imin, mut imax) = (lo, lo);
        for i in lo..hi {
            if samples[i] < samples[imin] {
                imin = i;
            }
            if samples[i] > samples[imax] {
                imax = i;
            }
        }
        keep.push(imin.min(imax));
        if imin != imax {
            keep.push(imin.max(imax));
        }
    }
    keep.push(n - 1);
    keep
}
