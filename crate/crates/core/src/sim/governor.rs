//! Per-unit primary frequency response pipeline:
//! deadband → droop reference → reserve limiter → first-order lag → ramp limiter.

use serde::{Deserialize, Serialize};

use crate::fleet::{Excursion, GeneratorUnit};
use crate::scalar::Scalar;

/// Removes the governor deadband from a frequency deviation.
///
/// `dev` is `f_n - f`, positive during under-frequency. Inside the band the
/// result is zero.
pub fn deadband_adjust<T: Scalar>(dev: T, event: Excursion, halfwidth: T) -> T {
    match event {
        Excursion::Under => (dev - halfwidth).max(T::zero()),
        Excursion::Over => (dev + halfwidth).min(T::zero()),
    }
}

/// Droop reference in MW: rating / (droop × f_n) × deviation past the band.
pub fn droop_reference<T: Scalar>(rated_mw: T, dev_db: T, f_n: T, droop_fraction: T) -> T {
    rated_mw / (droop_fraction * f_n) * dev_db
}

/// Caps the reference at the available reserve (under-frequency) or load
/// rejection room (over-frequency).
pub fn limit_reference<T: Scalar>(params: &GovernorParams<T>, ref_mw: T, event: Excursion) -> T {
    match event {
        Excursion::Under => ref_mw.min(params.spinning_reserve_mw),
        Excursion::Over => ref_mw.max(-params.load_rejection_mw),
    }
}

/// Exact zero-order-hold step of `T·x' + x = K·r`.
pub fn lag_step<T: Scalar>(state_mw: T, ref_mw: T, gain: T, time_constant: T, dt: T) -> T {
    let decay = (-dt / time_constant).exp();
    state_mw * decay + gain * ref_mw * (T::one() - decay)
}

/// Limits the per-step change to ±`mdrr·dt`.
pub fn ramp_limit<T: Scalar>(prev_mw: T, candidate_mw: T, mdrr: T, dt: T) -> T {
    let max_step = mdrr * dt;
    prev_mw + (candidate_mw - prev_mw).max(-max_step).min(max_step)
}

/// Static parameters of one unit's governor channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernorParams<T> {
    pub rated_mw: T,
    pub spinning_reserve_mw: T,
    pub load_rejection_mw: T,
    pub gain: T,
    pub time_constant: T,
    pub mdrr: T,
}

impl<T: Scalar> GovernorParams<T> {
    pub fn from_unit(unit: &GeneratorUnit<T>) -> Self {
        GovernorParams {
            rated_mw: unit.rated_mw,
            spinning_reserve_mw: unit.spinning_reserve_mw,
            load_rejection_mw: unit.load_rejection_mw,
            gain: unit.gain,
            time_constant: unit.time_constant,
            mdrr: unit.mdrr,
        }
    }
}

/// Settings shared by every channel in one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroopSettings<T> {
    pub nominal_frequency: T,
    pub deadband_halfwidth: T,
    pub droop_fraction: T,
    pub excursion: Excursion,
}

impl<T: Scalar> DroopSettings<T> {
    /// Droop reference before limiting, for a frequency `f`.
    fn raw_reference(&self, rated_mw: T, f: T) -> T {
        let dev = self.nominal_frequency - f;
        let dev_db = deadband_adjust(dev, self.excursion, self.deadband_halfwidth);
        droop_reference(rated_mw, dev_db, self.nominal_frequency, self.droop_fraction)
    }
}

/// Lag state and last limited output for one unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PfrState<T> {
    /// First-order lag output, MW.
    pub lag_mw: T,
    /// Ramp-limited response delivered to the system, MW.
    pub output_mw: T,
}

/// One unit's response pipeline, driven one sample at a time.
///
/// The response is incremental with respect to the pre-contingency
/// operating point: the droop reference at the initial frequency is already
/// part of the unit's measured output and is subtracted.
#[derive(Debug, Clone)]
pub struct GovernorChannel<T> {
    params: GovernorParams<T>,
    settings: DroopSettings<T>,
    baseline_ref: T,
    state: PfrState<T>,
}

impl<T: Scalar> GovernorChannel<T> {
    pub fn new(params: GovernorParams<T>, settings: DroopSettings<T>, initial_frequency: T) -> Self {
        let baseline_ref = settings.raw_reference(params.rated_mw, initial_frequency);
        GovernorChannel {
            params,
            settings,
            baseline_ref,
            state: PfrState::default(),
        }
    }

    pub fn state(&self) -> PfrState<T> {
        self.state
    }

    /// Advances one step of length `dt` using the frequency at the start of
    /// the step. Returns the new limited response, MW.
    pub fn advance(&mut self, frequency: T, dt: T) -> T {
        let p = &self.params;
        let reference = self.settings.raw_reference(p.rated_mw, frequency) - self.baseline_ref;
        let reference = limit_reference(p, reference, self.settings.excursion);
        self.state.lag_mw = lag_step(self.state.lag_mw, reference, p.gain, p.time_constant, dt);
        let ramped = ramp_limit(self.state.output_mw, self.state.lag_mw, p.mdrr, dt);
        // delivered response can never exceed the physical headroom, even for K > 1
        self.state.output_mw = ramped
            .min(p.spinning_reserve_mw)
            .max(-p.load_rejection_mw);
        self.state.output_mw
    }
}
