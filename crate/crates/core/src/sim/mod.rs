//! Single-mass swing equation simulation of a contingency.
//!
//! The system frequency obeys
//!
//! ```text
//! df/dt = f_n / 2 · ΔP(t) / KE_sys
//! ΔP(t) = ΔP_cont(t) + Σ ΔP_DR,i(t) + ΔP_LR(t) + ΔP_SDR(t)
//! ```
//!
//! and is marched with a fixed step using trapezoidal quadrature. The linear
//! load relief term is taken implicitly and the piecewise-constant terms
//! (staged trips, tripped demand response) are integrated exactly. Governor
//! responses are advanced with exact zero-order-hold lag updates driven by
//! a predicted mid-step frequency.

mod governor;
mod sdr;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use governor::{
    deadband_adjust, droop_reference, lag_step, limit_reference, ramp_limit, DroopSettings,
    GovernorChannel, GovernorParams, PfrState,
};
pub use sdr::{sdr_step, SdrRelays};

use crate::fleet::{
    total_generation_inertia, Excursion, FrequencyTrace, SimulationConfig, SimulationResult,
    SystemSnapshot, ValidationReport, FREQUENCY_BAND,
};
use crate::scalar::Scalar;

/// Time tolerance when deciding whether a staged trip has occurred.
const STAGE_EPS: f64 = 1e-9;

/// Frequency-dependent load reduction, MW: `P_load0 · k_p · dev / f_n`.
///
/// Positive while the frequency is below its reference.
pub fn load_relief<T: Scalar>(p_load0: T, k_p: T, dev: T, f_n: T) -> T {
    p_load0 * k_p * dev / f_n
}

/// A later MW change applied `delay` seconds after the initial trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage<T> {
    pub delay: T,
    /// Signed like the contingency itself: negative for lost generation.
    pub delta_mw: T,
}

/// The post-trip fleet plus the power imbalance that the trip introduces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyScenario<T> {
    /// Snapshot with any tripped unit already removed.
    pub base: SystemSnapshot<T>,
    /// Initial imbalance, MW. Negative for generation loss, positive for
    /// load loss.
    pub delta_p_cont: T,
    pub label: String,
    pub stages: Vec<Stage<T>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("stage delays must be positive and strictly increasing")]
    StageOrder,
    #[error("contingency size is not finite")]
    NonFinite,
}

impl<T: Scalar> ContingencyScenario<T> {
    pub fn new(
        base: SystemSnapshot<T>,
        delta_p_cont: T,
        label: impl Into<String>,
        stages: Vec<Stage<T>>,
    ) -> Result<Self, ScenarioError> {
        if !delta_p_cont.is_finite() || stages.iter().any(|s| !s.delta_mw.is_finite()) {
            return Err(ScenarioError::NonFinite);
        }
        let mut prev = T::zero();
        for s in &stages {
            if !(s.delay > prev) || !s.delay.is_finite() {
                return Err(ScenarioError::StageOrder);
            }
            prev = s.delay;
        }
        Ok(ContingencyScenario {
            base,
            delta_p_cont,
            label: label.into(),
            stages,
        })
    }

    /// Net contingency MW over all stages.
    pub fn total_delta_p(&self) -> T {
        self.delta_p_cont + self.stages.iter().map(|s| s.delta_mw).sum::<T>()
    }

    /// A scenario with no imbalance at all, e.g. tripping a unit at 0 MW.
    pub fn is_trivial(&self) -> bool {
        self.delta_p_cont == T::zero() && self.stages.iter().all(|s| s.delta_mw == T::zero())
    }

    pub fn excursion(&self) -> Excursion {
        let lead = if self.delta_p_cont != T::zero() {
            self.delta_p_cont
        } else {
            self.total_delta_p()
        };
        if lead > T::zero() {
            Excursion::Over
        } else {
            Excursion::Under
        }
    }

    /// Exact integral of the contingency imbalance over `[t0, t1]`, MW·s.
    pub fn contingency_integral(&self, t0: T, t1: T) -> T {
        let eps = T::lit(STAGE_EPS);
        let staged: T = self
            .stages
            .iter()
            .filter(|s| s.delay < t1 - eps)
            .map(|s| s.delta_mw * (t1 - s.delay.max(t0)))
            .sum();
        self.delta_p_cont * (t1 - t0) + staged
    }

    /// Contingency imbalance in force at time `t`, MW.
    pub fn contingency_at(&self, t: T) -> T {
        let eps = T::lit(STAGE_EPS);
        self.delta_p_cont
            + self
                .stages
                .iter()
                .filter(|s| s.delay <= t + eps)
                .map(|s| s.delta_mw)
                .sum::<T>()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("system inertia must be positive (KE_sys = {0} MW·s)")]
    NoInertia(f64),
    #[error("load inertia must be finite and non-negative")]
    BadLoadInertia,
    #[error("invalid simulation config: {0}")]
    Config(ValidationReport),
    #[error("simulation diverged at step {step} (t = {time} s): non-finite state")]
    Diverged { step: usize, time: f64 },
}

/// Simulates the scenario over the configured horizon.
///
/// `ke_load` is the load inertia in MW·s; the generation inertia comes from
/// the online units in `scenario.base`.
pub fn simulate<T: Scalar>(
    scenario: &ContingencyScenario<T>,
    config: &SimulationConfig<T>,
    ke_load: T,
) -> Result<SimulationResult<T>, SimError> {
    config.validate().map_err(SimError::Config)?;
    if !(ke_load >= T::zero()) || !ke_load.is_finite() {
        return Err(SimError::BadLoadInertia);
    }
    let snap = &scenario.base;
    let ke_gen = total_generation_inertia(snap);
    let ke_sys = ke_gen + ke_load;
    if !(ke_sys > T::zero()) {
        return Err(SimError::NoInertia(ke_sys.to_f64_lossy()));
    }

    let dt = config.time_step;
    let steps = (config.horizon / dt).round().to_usize().unwrap_or(0);
    let f_n = snap.nominal_frequency;
    let f0 = snap.pre_contingency_frequency;
    let excursion = scenario.excursion();
    let settings = DroopSettings {
        nominal_frequency: f_n,
        deadband_halfwidth: config.deadband_halfwidth,
        droop_fraction: config.droop_fraction,
        excursion,
    };

    let mut channels: Vec<_> = snap
        .units
        .iter()
        .filter(|u| u.provides_response())
        .map(|u| {
            (
                u.id.clone(),
                GovernorChannel::new(GovernorParams::from_unit(u), settings, f0),
            )
        })
        .collect();
    let mut relays = SdrRelays::new(&snap.sdr_blocks);

    // ΔP_LR = relief_coeff · (f0 − f)
    let relief_coeff = snap.system_load_mw * snap.load_relief_factor / f_n;
    let swing = f_n / (T::lit(2.0) * ke_sys);
    let half = T::lit(0.5);

    let cap = steps + 1;
    let mut freq = Vec::with_capacity(cap);
    let mut pfr: Vec<Vec<T>> = vec![Vec::with_capacity(cap); channels.len()];
    let mut relief = Vec::with_capacity(cap);
    let mut sdr_total = Vec::with_capacity(cap);
    let mut imbalance = Vec::with_capacity(cap);

    let mut f = f0;
    let mut sdr_mw = relays.step(f, T::zero());
    let mut dr_prev = T::zero();
    let mut lr_prev = T::zero();
    freq.push(f);
    pfr.iter_mut().for_each(|tr| tr.push(T::zero()));
    relief.push(T::zero());
    sdr_total.push(sdr_mw);
    imbalance.push(scenario.contingency_at(T::zero()) + sdr_mw);

    let (band_lo, band_hi) = (T::lit(FREQUENCY_BAND.0), T::lit(FREQUENCY_BAND.1));
    let mut collapsed = false;
    let mut exit = None;
    // frequency at SDR trip instants, where the trace has a corner
    let mut corners: Vec<(T, T)> = Vec::new();
    let implicit = T::one() + half * dt * swing * relief_coeff;

    // the march carries x = f − f0, which keeps single precision usable
    let mut x = T::zero();
    for k in 0..steps {
        let t0 = dt * T::from_usize_lossy(k);
        let t1 = dt * T::from_usize_lossy(k + 1);
        let p_left = scenario.contingency_at(t0) + dr_prev + lr_prev + sdr_mw;

        // governors see the predicted mid-step frequency
        let f_mid = f0 + (x + half * dt * swing * p_left);
        let mut dr_next = T::zero();
        for (i, (_, ch)) in channels.iter_mut().enumerate() {
            let out = ch.advance(f_mid, dt);
            pfr[i].push(out);
            dr_next = dr_next + out;
        }

        // step terms (contingency stages, SDR) are integrated exactly, the
        // continuous ones by the trapezoidal rule with implicit load relief
        let energy = scenario.contingency_integral(t0, t1)
            + sdr_mw * dt
            + half * dt * (dr_prev + dr_next + lr_prev);
        let mut x_next = (x + swing * energy) / implicit;
        let trips = relays.observe_interval(t0, f, t1, f0 + x_next);
        if !trips.is_empty() {
            corners.extend(
                trips
                    .iter()
                    .map(|&(at, _)| (at, f0 + (x + (x_next - x) * (at - t0) / dt))),
            );
            let extra: T = trips.iter().map(|&(at, mw)| mw * (t1 - at)).sum();
            x_next = x_next + swing * extra / implicit;
        }
        let f_next = f0 + x_next;

        if !f_next.is_finite() {
            return Err(SimError::Diverged {
                step: k + 1,
                time: t1.to_f64_lossy(),
            });
        }
        if f_next < band_lo || f_next > band_hi {
            collapsed = true;
            let edge = if f_next < band_lo { band_lo } else { band_hi };
            exit = Some((edge, t0 + dt * (f - edge) / (f - f_next)));
            pfr.iter_mut().for_each(|tr| {
                tr.pop();
            });
            break;
        }

        x = x_next;
        f = f_next;
        sdr_mw = relays.tripped_mw();
        lr_prev = -relief_coeff * x;
        dr_prev = dr_next;
        freq.push(f);
        relief.push(lr_prev);
        sdr_total.push(sdr_mw);
        imbalance.push(scenario.contingency_at(t1) + dr_next + lr_prev + sdr_mw);
    }

    let trace = FrequencyTrace {
        start_time: T::zero(),
        time_step: dt,
        samples: freq,
    };
    let (nadir_idx, mut nadir_hz) = extremum(&trace.samples, |a, b| a < b);
    let (zenith_idx, mut zenith_hz) = extremum(&trace.samples, |a, b| a > b);
    let (mut nadir_time, mut zenith_time) = (trace.time_at(nadir_idx), trace.time_at(zenith_idx));
    if let Some(&(at, fc)) = corners.iter().filter(|c| c.1 < nadir_hz).min_by(|a, b| {
        a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)
    }) {
        (nadir_hz, nadir_time) = (fc, at);
    }
    // a collapsed run reports the band edge it crossed, not its last sample
    match exit {
        Some((edge, at)) if edge == band_lo => (nadir_hz, nadir_time) = (edge, at),
        Some((edge, at)) => (zenith_hz, zenith_time) = (edge, at),
        None => {}
    }
    let alarm = collapsed
        || match excursion {
            Excursion::Under => nadir_hz < config.ufls_threshold,
            Excursion::Over => zenith_hz > config.zenith_threshold,
        };

    let per_unit_pfr: BTreeMap<_, _> = channels
        .into_iter()
        .map(|(id, _)| id)
        .zip(pfr)
        .collect();

    Ok(SimulationResult {
        scenario_label: scenario.label.clone(),
        snapshot_time: snap.timestamp,
        excursion,
        nadir_time,
        zenith_time,
        nadir_hz,
        zenith_hz,
        frequency: trace,
        per_unit_pfr,
        load_relief: relief,
        sdr_total,
        sdr_tripped: relays.trips(),
        total_imbalance: imbalance,
        ke_sys,
        ke_gen,
        ke_load,
        collapsed,
        alarm,
    })
}

/// Earliest index whose value beats all others under `better`.
fn extremum<T: Scalar>(samples: &[T], better: impl Fn(T, T) -> bool) -> (usize, T) {
    let mut best = (0, samples[0]);
    for (i, &x) in samples.iter().enumerate().skip(1) {
        if better(x, best.1) {
            best = (i, x);
        }
    }
    best
}
