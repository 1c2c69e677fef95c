//! Operational state: the calculation cycle, alarm evaluation and what-if
//! runs against the last calculated snapshot.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use rtfs_core::{
    build_scenario, predict_load_inertia, simulate, worst_case, Config, ContingencyError, ContingencyScenario,
    LoadModel, Outcome, Snapshot, Stage, UnitId,
};
use rtfs_ingest::{IngestError, ResultsStore, UnitParameterStore};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::config::ServiceConfig;
use crate::view::{ResultSummary, StatusView};

/// Conditions that make the service degraded without stopping it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Health {
    /// The newest snapshot is older than the staleness bound.
    pub stale_snapshot: bool,
    pub snapshot_error: Option<String>,
    pub storage_error: Option<String>,
    pub calculation_error: Option<String>,
}

impl Health {
    pub fn degraded(&self) -> bool {
        self.stale_snapshot
            || self.snapshot_error.is_some()
            || self.storage_error.is_some()
            || self.calculation_error.is_some()
    }
}

/// Immutable picture of the operational state, swapped whole.
#[derive(Debug, Clone, Default)]
pub struct OperationalState {
    pub latest: Option<Arc<Outcome>>,
    /// Breach flag of the result before `latest`.
    pub previous_breach: bool,
    pub alarm: bool,
    /// Snapshot `latest` was calculated from, with calibrated parameters
    /// merged in. What-if runs start from it.
    pub base: Option<Arc<Snapshot>>,
    pub last_cycle_at: Option<DateTime<Utc>>,
    pub last_snapshot_time: Option<DateTime<Utc>>,
    pub newest_snapshot_time: Option<DateTime<Utc>>,
    pub cycles: u64,
    pub health: Health,
}

/// Alarm with hysteresis: raised by one breaching result, cleared only
/// after two consecutive results without a breach.
pub fn alarm_state(latest: Option<&Outcome>, previous_breach: bool) -> bool {
    latest.is_some_and(|r| r.alarm) || (latest.is_some() && previous_breach)
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ServiceEvent {
    Status(StatusView),
    Result(ResultSummary),
}

#[derive(Debug, thiserror::Error)]
pub enum CycleError {
    #[error("snapshot from {snapshot_time} is {age_s:.1} s old (limit {limit_s} s)")]
    Stale {
        snapshot_time: DateTime<Utc>,
        age_s: f64,
        limit_s: f64,
    },
    #[error("snapshot from {0} is not newer than the last calculated one")]
    NotNewer(DateTime<Utc>),
    #[error("calculation failed: {0}")]
    Calculation(#[from] ContingencyError),
}

/// A rejected redispatch entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<UnitId>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualScenario {
    /// Unit to trip. Without it `delta_p_mw` is applied as a bare imbalance.
    #[serde(default)]
    pub unit: Option<UnitId>,
    #[serde(default)]
    pub delta_p_mw: Option<f64>,
    #[serde(default)]
    pub stages: Vec<Stage<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    /// MW change per unit.
    #[serde(default)]
    pub deltas: BTreeMap<UnitId, f64>,
    /// Accept deltas that do not sum to zero.
    #[serde(default)]
    pub allow_unbalanced: bool,
    #[serde(default)]
    pub scenario: Option<ManualScenario>,
}

#[derive(Debug, thiserror::Error)]
pub enum WhatIfError {
    #[error("no snapshot has been calculated yet")]
    NoBase,
    #[error("redispatch rejected")]
    Rejected(Vec<Diagnostic>),
    #[error("calculation failed: {0}")]
    Calculation(String),
}

/// Largest |Σ delta| accepted as balanced, MW.
const BALANCE_TOLERANCE: f64 = 1e-6;

/// Applies redispatch deltas, moving spinning reserve the opposite way.
pub fn apply_redispatch(
    base: &Snapshot,
    deltas: &BTreeMap<UnitId, f64>,
    allow_unbalanced: bool,
) -> Result<Snapshot, Vec<Diagnostic>> {
    let mut snap = base.clone();
    let mut diags = Vec::new();
    for (id, &d) in deltas {
        let Some(u) = snap.units.iter_mut().find(|u| &u.id == id) else {
            diags.push(Diagnostic {
                unit: Some(id.clone()),
                message: "unknown unit".into(),
            });
            continue;
        };
        if !d.is_finite() {
            diags.push(Diagnostic {
                unit: Some(id.clone()),
                message: "delta is not finite".into(),
            });
            continue;
        }
        let out = u.output_mw + d;
        if out < 0.0 || out > u.rated_mw {
            diags.push(Diagnostic {
                unit: Some(id.clone()),
                message: format!(
                    "output {} MW + {d} MW = {out} MW is outside [0, {}] MW",
                    u.output_mw, u.rated_mw
                ),
            });
            continue;
        }
        if d != 0.0 && !u.online {
            diags.push(Diagnostic {
                unit: Some(id.clone()),
                message: "unit is offline".into(),
            });
            continue;
        }
        u.output_mw = out;
        u.spinning_reserve_mw = (u.spinning_reserve_mw - d).clamp(0.0, u.rated_mw - out);
    }
    let total: f64 = deltas.values().filter(|d| d.is_finite()).sum();
    if !allow_unbalanced && total.abs() > BALANCE_TOLERANCE {
        diags.push(Diagnostic {
            unit: None,
            message: format!("deltas sum to {total} MW; set allow_unbalanced to run anyway"),
        });
    }
    if diags.is_empty() {
        Ok(snap)
    } else {
        Err(diags)
    }
}

pub const WHATIF_LABEL: &str = "what-if";

pub struct RtfsService {
    config: ServiceConfig,
    store: ResultsStore,
    params: UnitParameterStore,
    load_model: LoadModel,
    state: ArcSwap<OperationalState>,
    events: broadcast::Sender<ServiceEvent>,
    // one cycle at a time; readers never take it
    cycle_lock: Mutex<()>,
}

impl RtfsService {
    /// Opens the results store and restores the latest stored result.
    pub fn open(config: ServiceConfig) -> Result<Self, IngestError> {
        let store = ResultsStore::open(&config.results_dir)?;
        let params = match &config.unit_params {
            Some(p) => UnitParameterStore::load(p)?,
            None => UnitParameterStore::default(),
        };
        let load_model = match &config.load_model {
            Some(m) => m.clone(),
            None => store.load_model()?.unwrap_or_default(),
        };
        let mut state = OperationalState::default();
        match store.load_history(None, None) {
            Ok(history) => {
                let mut it = history.into_iter().rev();
                if let Some(latest) = it.next() {
                    state.previous_breach = it.next().is_some_and(|r| r.alarm);
                    state.last_snapshot_time = Some(latest.snapshot_time);
                    state.alarm = alarm_state(Some(&latest), state.previous_breach);
                    state.latest = Some(Arc::new(latest));
                }
            }
            Err(e) => state.health.storage_error = Some(e.to_string()),
        }
        let (events, _) = broadcast::channel(64);
        Ok(RtfsService {
            config,
            store,
            params,
            load_model,
            state: ArcSwap::from_pointee(state),
            events,
            cycle_lock: Mutex::new(()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &ResultsStore {
        &self.store
    }

    pub fn load_model(&self) -> &LoadModel {
        &self.load_model
    }

    pub fn state(&self) -> Arc<OperationalState> {
        self.state.load_full()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<ServiceEvent> {
        self.events.subscribe()
    }

    pub fn status(&self) -> StatusView {
        StatusView::from_state(&self.state(), self.config.staleness_s)
    }

    fn update(&self, f: impl FnOnce(&mut OperationalState)) -> Arc<OperationalState> {
        let mut next = (*self.state.load_full()).clone();
        f(&mut next);
        let next = Arc::new(next);
        self.state.store(next.clone());
        next
    }

    fn publish_status(&self) {
        let _ = self.events.send(ServiceEvent::Status(self.status()));
    }

    /// Load inertia for `snapshot`: its override, else the model prediction.
    pub fn resolve_ke_load(&self, snapshot: &Snapshot) -> f64 {
        snapshot
            .load_inertia_override
            .unwrap_or_else(|| predict_load_inertia(snapshot.system_load_mw, &self.load_model))
    }

    /// Snapshot with calibrated unit parameters merged in.
    pub fn prepare(&self, mut snapshot: Snapshot) -> Snapshot {
        self.params.apply(&mut snapshot);
        snapshot
    }

    fn simulation(&self) -> &Config {
        &self.config.simulation
    }

    /// One full calculation on `snapshot`.
    pub fn run_cycle(&self, snapshot: Snapshot, now: DateTime<Utc>) -> Result<Arc<Outcome>, CycleError> {
        let _guard = self.cycle_lock.lock().unwrap_or_else(|p| p.into_inner());
        let current = self.state();
        let age_s = (now - snapshot.timestamp).num_milliseconds() as f64 / 1000.0;
        if age_s > self.config.staleness_s {
            self.update(|s| s.health.stale_snapshot = true);
            self.publish_status();
            return Err(CycleError::Stale {
                snapshot_time: snapshot.timestamp,
                age_s,
                limit_s: self.config.staleness_s,
            });
        }
        if current.last_snapshot_time.is_some_and(|t| snapshot.timestamp <= t) {
            return Err(CycleError::NotNewer(snapshot.timestamp));
        }
        let snapshot = self.prepare(snapshot);
        let ke_load = self.resolve_ke_load(&snapshot);
        let result = match worst_case(&snapshot, self.simulation(), ke_load) {
            Ok(r) => Arc::new(r),
            Err(e) => {
                self.update(|s| s.health.calculation_error = Some(e.to_string()));
                self.publish_status();
                return Err(e.into());
            }
        };
        let storage_error = self.store.store(&result).err().map(|e| e.to_string());
        if let Some(e) = &storage_error {
            tracing::warn!("result not stored: {e}");
        }
        let snapshot_time = snapshot.timestamp;
        self.update(|s| {
            s.previous_breach = s.latest.as_ref().is_some_and(|r| r.alarm);
            s.alarm = alarm_state(Some(&result), s.previous_breach);
            s.latest = Some(result.clone());
            s.base = Some(Arc::new(snapshot));
            s.last_cycle_at = Some(now);
            s.last_snapshot_time = Some(snapshot_time);
            s.newest_snapshot_time = Some(s.newest_snapshot_time.map_or(snapshot_time, |t| t.max(snapshot_time)));
            s.cycles += 1;
            s.health.stale_snapshot = false;
            s.health.calculation_error = None;
            s.health.storage_error = storage_error;
        });
        let _ = self.events.send(ServiceEvent::Result(ResultSummary::from(&*result)));
        self.publish_status();
        Ok(result)
    }

    /// Records the newest snapshot seen and flags staleness. Returns true
    /// when the health changed.
    pub fn observe_snapshot(&self, snapshot_time: Option<DateTime<Utc>>, now: DateTime<Utc>) -> bool {
        let before = self.state();
        let newest = match (before.newest_snapshot_time, snapshot_time) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        let stale = newest.is_some_and(|t| (now - t).num_milliseconds() as f64 / 1000.0 > self.config.staleness_s);
        if before.health.stale_snapshot == stale && before.newest_snapshot_time == newest {
            return false;
        }
        let changed = before.health.stale_snapshot != stale;
        self.update(|s| {
            s.newest_snapshot_time = newest;
            s.health.stale_snapshot = stale;
        });
        if changed {
            self.publish_status();
        }
        changed
    }

    pub fn set_snapshot_error(&self, error: Option<String>) {
        if self.state().health.snapshot_error != error {
            self.update(|s| s.health.snapshot_error = error);
            self.publish_status();
        }
    }

    /// Runs a hypothetical redispatch against the last calculated snapshot.
    /// Operational state is not touched.
    pub fn whatif(&self, req: &WhatIfRequest) -> Result<Outcome, WhatIfError> {
        let base = self.state().base.clone().ok_or(WhatIfError::NoBase)?;
        let snap = apply_redispatch(&base, &req.deltas, req.allow_unbalanced).map_err(WhatIfError::Rejected)?;
        let snap = rtfs_core::validate_snapshot(snap).map_err(|r| {
            WhatIfError::Rejected(
                r.violations
                    .into_iter()
                    .map(|v| Diagnostic {
                        unit: match v.subject {
                            rtfs_core::Subject::Unit(id) => Some(id),
                            _ => None,
                        },
                        message: v.message,
                    })
                    .collect(),
            )
        })?;
        let ke_load = self.resolve_ke_load(&snap);
        let calc = |e: String| WhatIfError::Calculation(e);
        let mut result = match &req.scenario {
            None => worst_case(&snap, self.simulation(), ke_load).map_err(|e| calc(e.to_string()))?,
            Some(m) => {
                let scenario = match (&m.unit, m.delta_p_mw) {
                    (Some(id), None) => build_scenario(&snap, id, m.stages.clone()).map_err(|e| match e {
                        ContingencyError::UnknownUnit(_) | ContingencyError::UnitOffline(_) => {
                            WhatIfError::Rejected(vec![Diagnostic {
                                unit: Some(id.clone()),
                                message: e.to_string(),
                            }])
                        }
                        e => calc(e.to_string()),
                    })?,
                    (None, Some(dp)) => ContingencyScenario::new(snap.clone(), dp, "manual", m.stages.clone())
                        .map_err(|e| WhatIfError::Rejected(vec![Diagnostic { unit: None, message: e.to_string() }]))?,
                    _ => {
                        return Err(WhatIfError::Rejected(vec![Diagnostic {
                            unit: None,
                            message: "scenario needs exactly one of `unit` and `delta_p_mw`".into(),
                        }]))
                    }
                };
                simulate(&scenario, self.simulation(), ke_load).map_err(|e| calc(e.to_string()))?
            }
        };
        result.scenario_label = format!("{WHATIF_LABEL}: {}", result.scenario_label);
        Ok(result)
    }
}
