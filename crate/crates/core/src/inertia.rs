//! System and load inertia estimation from recorded disturbances.
//!
//! The system inertia seen during a sudden trip follows from the peak
//! smoothed RoCoF; subtracting the committed generation inertia leaves the
//! load contribution, which is regressed against pre-event system load.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::FrequencyTrace;
use crate::scalar::Scalar;
use crate::stats::{linear_fit, FitError};

/// Default smoothing window for RoCoF, s.
pub const ROCOF_WINDOW: f64 = 0.5;
/// RoCoF below which an inertia estimate is considered unreliable, Hz/s.
pub const MIN_CONFIDENT_ROCOF: f64 = 0.05;
/// Pre-event span a disturbance record must cover, s.
pub const PRE_EVENT_SPAN: f64 = 2.0;
/// Post-event span a disturbance record must cover, s.
pub const POST_EVENT_SPAN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InertiaError {
    #[error("trace of {duration} s is too short for a {window} s window")]
    TraceTooShort { duration: f64, window: f64 },
    #[error("max RoCoF {rocof} Hz/s is below the {cutoff} Hz/s confidence cutoff")]
    LowConfidence { rocof: f64, cutoff: f64 },
    #[error("record {0} is not a sudden trip")]
    NotSuddenTrip(String),
    #[error("record {event_id}: {reason}")]
    InvalidRecord { event_id: String, reason: String },
    #[error("regression failed: {0}")]
    Fit(#[from] FitError),
    #[error("fitted slope {0} is not positive")]
    NonPositiveSlope(f64),
}

/// Peak absolute RoCoF, Hz/s, from a sample-by-sample derivative smoothed
/// by a centred moving average of width `window` seconds.
///
/// The window is truncated at the trace edges.
pub fn max_rocof<T: Scalar>(trace: &FrequencyTrace<T>, window: T) -> Result<T, InertiaError> {
    if !(trace.duration() > window) {
        return Err(InertiaError::TraceTooShort {
            duration: trace.duration().to_f64_lossy(),
            window: window.to_f64_lossy(),
        });
    }
    let dt = trace.time_step;
    let diffs: Vec<T> = trace
        .samples
        .windows(2)
        .map(|w| (w[1] - w[0]) / dt)
        .collect();
    let width = (window / dt).round().to_usize().unwrap_or(1).max(1);
    let half = width / 2;

    // prefix sums keep the smoothing linear in trace length
    let mut prefix = Vec::with_capacity(diffs.len() + 1);
    prefix.push(T::zero());
    for &d in &diffs {
        let last = *prefix.last().unwrap();
        prefix.push(last + d);
    }
    let n = diffs.len();
    let peak = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / T::from_usize_lossy(hi - lo)
        })
        .fold(T::zero(), |acc, m| acc.max(m.abs()));
    Ok(peak)
}

/// `KE_sys = 0.5 · f_n · ΔP / RoCoF_max`, rejecting low-RoCoF events.
pub fn system_inertia_from_rocof<T: Scalar>(
    f_n: T,
    delta_p: T,
    rocof: T,
    min_rocof: T,
) -> Result<T, InertiaError> {
    let rocof = rocof.abs();
    if !(rocof >= min_rocof) || rocof == T::zero() {
        return Err(InertiaError::LowConfidence {
            rocof: rocof.to_f64_lossy(),
            cutoff: min_rocof.to_f64_lossy(),
        });
    }
    Ok(T::lit(0.5) * f_n * delta_p / rocof)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SuddenTrip,
    RampDown,
}

/// High-speed frequency recording of one historical event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceRecord<T> {
    pub event_id: String,
    pub frequency: FrequencyTrace<T>,
    /// Time of the event within the trace's time base, s.
    pub event_time: T,
    /// Lost generation, MW (positive for a trip).
    pub delta_p: T,
    pub pre_event_load_mw: T,
    /// Committed generation inertia at the time of the event, MW·s.
    pub ke_gen_at_event: T,
    pub event_kind: EventKind,
}

impl<T: Scalar> DisturbanceRecord<T> {
    /// Checks sampling rate, event coverage and trip size.
    pub fn validate(&self) -> Result<(), InertiaError> {
        let bad = |reason: String| InertiaError::InvalidRecord {
            event_id: self.event_id.clone(),
            reason,
        };
        if self.frequency.time_step > T::lit(0.05) {
            return Err(bad("frequency must be sampled at 20 samples/s or faster".into()));
        }
        let before = self.event_time - self.frequency.start_time;
        let after = self.frequency.time_at(self.frequency.len() - 1) - self.event_time;
        let tol = self.frequency.time_step * T::lit(0.5);
        if before + tol < T::lit(PRE_EVENT_SPAN) {
            return Err(bad(format!("only {before} s recorded before the event")));
        }
        if after + tol < T::lit(POST_EVENT_SPAN) {
            return Err(bad(format!("only {after} s recorded after the event")));
        }
        if self.event_kind == EventKind::SuddenTrip && !(self.delta_p > T::zero()) {
            return Err(bad("sudden-trip records need a positive delta_p".into()));
        }
        Ok(())
    }
}

/// Tunables for [`estimate_system_inertia_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaEstimator<T> {
    pub window: T,
    pub min_rocof: T,
}

impl<T: Scalar> Default for InertiaEstimator<T> {
    fn default() -> Self {
        InertiaEstimator {
            window: T::lit(ROCOF_WINDOW),
            min_rocof: T::lit(MIN_CONFIDENT_ROCOF),
        }
    }
}

/// System inertia from a sudden-trip record with the default estimator.
pub fn estimate_system_inertia<T: Scalar>(record: &DisturbanceRecord<T>, f_n: T) -> Result<T, InertiaError> {
    estimate_system_inertia_with(record, f_n, &InertiaEstimator::default())
}

pub fn estimate_system_inertia_with<T: Scalar>(
    record: &DisturbanceRecord<T>,
    f_n: T,
    estimator: &InertiaEstimator<T>,
) -> Result<T, InertiaError> {
    if record.event_kind != EventKind::SuddenTrip {
        return Err(InertiaError::NotSuddenTrip(record.event_id.clone()));
    }
    record.validate()?;
    let rocof = max_rocof(&record.frequency, estimator.window)?;
    system_inertia_from_rocof(f_n, record.delta_p, rocof, estimator.min_rocof)
}

/// Load inertia left after removing generation inertia from a system
/// estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadInertiaEstimate<T> {
    pub ke_load: T,
    /// The estimate came out negative, which only estimation noise explains.
    pub negative: bool,
}

pub fn load_inertia_from_event<T: Scalar>(ke_sys: T, ke_gen: T) -> LoadInertiaEstimate<T> {
    let ke_load = ke_sys - ke_gen;
    LoadInertiaEstimate {
        ke_load,
        negative: ke_load < T::zero(),
    }
}

/// Linear load inertia model `KE_load = slope · (P_load0 − intercept)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadInertiaModel<T> {
    /// MW·s per MW of system load.
    pub slope: T,
    /// System load at which the model's load inertia reaches zero, MW.
    pub intercept_load_mw: T,
    /// `None` for models not fitted from local data.
    #[serde(default)]
    pub fit_r2: Option<T>,
    #[serde(default)]
    pub sample_count: usize,
}

impl<T: Scalar> LoadInertiaModel<T> {
    /// The operational lower-cluster regression (2.2528 MW·s/MW, 783 MW).
    pub fn published() -> Self {
        LoadInertiaModel {
            slope: T::lit(2.2528),
            intercept_load_mw: T::lit(783.0),
            fit_r2: None,
            sample_count: 0,
        }
    }
}

impl<T: Scalar> Default for LoadInertiaModel<T> {
    fn default() -> Self {
        Self::published()
    }
}

/// Load inertia for a given system load, floored at zero.
pub fn predict_load_inertia<T: Scalar>(p_load0: T, model: &LoadInertiaModel<T>) -> T {
    (model.slope * (p_load0 - model.intercept_load_mw)).max(T::zero())
}

/// One historical (system load, load inertia) observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadInertiaSample<T> {
    pub p_load0: T,
    pub ke_load: T,
}

/// Least-squares fit of load inertia against system load over the samples
/// accepted by `select`.
///
/// Cluster selection is left to the caller; pass `|_| true` to use every
/// sample.
pub fn fit_load_inertia_model<T: Scalar>(
    samples: &[LoadInertiaSample<T>],
    select: impl Fn(&LoadInertiaSample<T>) -> bool,
) -> Result<LoadInertiaModel<T>, InertiaError> {
    let (xs, ys): (Vec<T>, Vec<T>) = samples
        .iter()
        .filter(|s| select(s))
        .map(|s| (s.p_load0, s.ke_load))
        .unzip();
    let fit = linear_fit(&xs, &ys, 3)?;
    if !(fit.slope > T::zero()) {
        return Err(InertiaError::NonPositiveSlope(fit.slope.to_f64_lossy()));
    }
    Ok(LoadInertiaModel {
        slope: fit.slope,
        intercept_load_mw: -fit.intercept / fit.slope,
        fit_r2: Some(fit.r2),
        sample_count: xs.len(),
    })
}
