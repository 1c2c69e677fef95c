//! Offline commands: one-shot simulation and calibration from files.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use rtfs_core::inertia::fit_load_inertia_model;
use rtfs_core::{
    build_scenario, estimate_lrf, estimate_system_inertia, fit_unit_lag, load_inertia_from_event, predict_load_inertia,
    simulate, worst_case, Config, EventKind, FrequencySource, LagSearch, LoadInertiaSample, LoadModel, Outcome,
    Record, UnitId, UnitStaticParams, UnitTrace,
};
use rtfs_ingest::{parse_snapshot, parse_trace_file, ParseMode, ResultsStore, TraceFile, UnitParameterStore, UnitParameters};
use serde::Serialize;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn trace(path: &Path) -> Result<TraceFile> {
    parse_trace_file(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn meta(tf: &TraceFile, key: &str) -> Result<f64> {
    tf.header
        .metadata_f64(key)
        .ok_or_else(|| anyhow!("trace {} needs numeric header `{key}`", tf.header.event_id))
}

fn meta_or(tf: &TraceFile, key: &str, default: f64) -> f64 {
    tf.header.metadata_f64(key).unwrap_or(default)
}

/// Worst case, or the trip of `unit`, on the snapshot in `path`.
pub fn simulate_file(path: &Path, unit: Option<&str>, config: &Config, model: &LoadModel, mode: ParseMode) -> Result<Outcome> {
    let snap = parse_snapshot(&read(path)?, mode).with_context(|| format!("parsing {}", path.display()))?;
    let ke_load = snap
        .load_inertia_override
        .unwrap_or_else(|| predict_load_inertia(snap.system_load_mw, model));
    Ok(match unit {
        None => worst_case(&snap, config, ke_load)?,
        Some(id) => simulate(&build_scenario(&snap, &UnitId::new(id), vec![])?, config, ke_load)?,
    })
}

#[derive(Debug, Serialize)]
pub struct LagReport {
    pub event_id: String,
    pub unit_id: UnitId,
    pub gain: f64,
    pub time_constant: f64,
    pub normalized_rmse: f64,
    pub converged: bool,
    pub high_residual: bool,
    pub diagnostic: Option<String>,
}

/// Fits (K, T) to each unit trace. Header keys: `unit_id`, `rated_mw`,
/// `mdrr`, `event_offset_s`, and optionally `spinning_reserve_mw`,
/// `load_rejection_mw`, `frequency_source` (`local` or
/// `centre_of_inertia`). The MW channel is `output`.
pub fn calibrate_lag(inputs: &[PathBuf], config: &Config, params: Option<&Path>) -> Result<Vec<LagReport>> {
    let mut store = match params {
        Some(p) => UnitParameterStore::load(p)?,
        None => UnitParameterStore::default(),
    };
    let mut reports = Vec::new();
    for path in inputs {
        let tf = trace(path)?;
        let (freq, output) = tf.frequency_and("output")?;
        let rated = meta(&tf, "rated_mw")?;
        let static_params = UnitStaticParams {
            rated_mw: rated,
            spinning_reserve_mw: meta_or(&tf, "spinning_reserve_mw", rated),
            load_rejection_mw: meta_or(&tf, "load_rejection_mw", 0.0),
            mdrr: meta(&tf, "mdrr")?,
            deadband_halfwidth: config.deadband_halfwidth,
            droop_fraction: config.droop_fraction,
            nominal_frequency: meta_or(&tf, "nominal_frequency", 50.0),
        };
        let source = match tf.header.metadata.get("frequency_source").map(String::as_str) {
            None | Some("centre_of_inertia") => FrequencySource::CentreOfInertia,
            Some("local") => FrequencySource::Local,
            Some(other) => bail!("{}: unknown frequency_source `{other}`", path.display()),
        };
        let unit_id = UnitId::new(tf.header.metadata.get("unit_id").cloned().unwrap_or_else(|| tf.header.event_id.clone()));
        let ut = UnitTrace::new(unit_id.clone(), freq, output, meta(&tf, "event_offset_s")?, static_params, source)?;
        let fit = fit_unit_lag(&ut, &LagSearch::default()).with_context(|| format!("fitting {}", path.display()))?;
        if !fit.high_residual {
            store.insert(
                unit_id.clone(),
                UnitParameters {
                    gain: fit.gain,
                    time_constant: fit.time_constant,
                    fitted_at: Some(Utc::now()),
                    frequency_source: Some(source),
                    event_id: Some(tf.header.event_id.clone()),
                },
            );
        }
        reports.push(LagReport {
            event_id: tf.header.event_id.clone(),
            unit_id,
            gain: fit.gain,
            time_constant: fit.time_constant,
            normalized_rmse: fit.normalized_rmse,
            converged: fit.converged,
            high_residual: fit.high_residual,
            diagnostic: fit.diagnostic,
        });
    }
    if let Some(p) = params {
        store.save(p)?;
    }
    Ok(reports)
}

#[derive(Debug, Serialize)]
pub struct LrfReport {
    pub event_id: String,
    pub k_p: f64,
    pub r2: f64,
    pub pairs: usize,
}

/// Load relief factor per event from `frequency` and `load` channels.
/// Samples after `event_offset_s` are regressed; `pre_event_load_mw`
/// defaults to the mean load before the event.
pub fn calibrate_lrf(inputs: &[PathBuf]) -> Result<Vec<LrfReport>> {
    inputs
        .iter()
        .map(|path| {
            let tf = trace(path)?;
            let (freq, load) = tf.frequency_and("load")?;
            let onset = freq.index_at(meta(&tf, "event_offset_s")?);
            if onset == 0 {
                bail!("{}: event at the first sample leaves no pre-event load", path.display());
            }
            let p0 = tf
                .header
                .metadata_f64("pre_event_load_mw")
                .unwrap_or_else(|| load[..onset].iter().sum::<f64>() / onset as f64);
            let pairs: Vec<(f64, f64)> = freq.samples[onset..].iter().copied().zip(load[onset..].iter().copied()).collect();
            let est = estimate_lrf(&pairs, p0, meta_or(&tf, "nominal_frequency", 50.0))
                .with_context(|| format!("estimating {}", path.display()))?;
            Ok(LrfReport {
                event_id: tf.header.event_id.clone(),
                k_p: est.k_p,
                r2: est.r2,
                pairs: pairs.len(),
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct InertiaReport {
    pub event_id: String,
    pub ke_sys: f64,
    pub ke_load: f64,
    pub negative_load_inertia: bool,
    pub pre_event_load_mw: f64,
}

#[derive(Debug, Serialize)]
pub struct InertiaCalibration {
    pub events: Vec<InertiaReport>,
    pub model: Option<LoadModel>,
    pub model_error: Option<String>,
}

fn record(tf: &TraceFile, delta_p: f64, event_time: f64, load: f64, ke_gen: f64) -> Result<Record> {
    Ok(Record {
        event_id: tf.header.event_id.clone(),
        frequency: tf.frequency()?,
        event_time,
        delta_p,
        pre_event_load_mw: load,
        ke_gen_at_event: ke_gen,
        event_kind: EventKind::SuddenTrip,
    })
}

/// System and load inertia per sudden-trip event, and the load inertia
/// model fitted across them. Header keys: `delta_p_mw`, `event_offset_s`,
/// `pre_event_load_mw`, `ke_gen_mw_s`.
pub fn calibrate_inertia(inputs: &[PathBuf], results_dir: Option<&Path>) -> Result<InertiaCalibration> {
    let mut events = Vec::new();
    for path in inputs {
        let tf = trace(path)?;
        let load = meta(&tf, "pre_event_load_mw")?;
        let ke_gen = meta(&tf, "ke_gen_mw_s")?;
        let rec = record(&tf, meta(&tf, "delta_p_mw")?, meta(&tf, "event_offset_s")?, load, ke_gen)?;
        let ke_sys = estimate_system_inertia(&rec, meta_or(&tf, "nominal_frequency", 50.0))
            .with_context(|| format!("estimating {}", path.display()))?;
        let ke_load = load_inertia_from_event(ke_sys, ke_gen);
        events.push(InertiaReport {
            event_id: rec.event_id,
            ke_sys,
            ke_load: ke_load.ke_load,
            negative_load_inertia: ke_load.negative,
            pre_event_load_mw: load,
        });
    }
    let samples: Vec<_> = events
        .iter()
        .map(|e| LoadInertiaSample {
            p_load0: e.pre_event_load_mw,
            ke_load: e.ke_load,
        })
        .collect();
    let (model, model_error) = match fit_load_inertia_model(&samples, |s| s.ke_load >= 0.0) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    if let (Some(dir), Some(m)) = (results_dir, &model) {
        ResultsStore::open(dir)?.store_model(m)?;
    }
    Ok(InertiaCalibration {
        events,
        model,
        model_error,
    })
}

/// System inertia from one trace. The event time comes from `event_time`
/// or the `event_offset_s` header.
pub fn estimate_inertia(path: &Path, delta_p: f64, event_time: Option<f64>) -> Result<f64> {
    let tf = trace(path)?;
    let event_time = match event_time {
        Some(t) => t,
        None => meta(&tf, "event_offset_s")?,
    };
    let rec = record(&tf, delta_p.abs(), event_time, 0.0, 0.0)?;
    Ok(estimate_system_inertia(&rec, meta_or(&tf, "nominal_frequency", 50.0))?)
}
