//! Offline calibration of the parameters SCADA cannot observe: the load
//! relief factor and each unit's first-order lag gain and time constant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{Excursion, FrequencyTrace, UnitId};
use crate::scalar::Scalar;
use crate::sim::{DroopSettings, GovernorChannel, GovernorParams};
use crate::stats::{linear_fit, FitError};

/// Load relief factor used operationally.
pub const DEFAULT_LOAD_RELIEF_FACTOR: f64 = 2.0;
/// Minimum number of (frequency, load) pairs for an LRF estimate.
pub const MIN_LRF_PAIRS: usize = 10;
/// Minimum frequency spread across the pairs, Hz.
pub const MIN_LRF_SPREAD: f64 = 0.05;
/// Pre-event span averaged for the MW baseline, s.
pub const BASELINE_SPAN: f64 = 2.0;
/// Post-onset span used when fitting a unit, s.
pub const FIT_SPAN: f64 = 30.0;
/// Normalised RMS residual above which a fit is flagged.
pub const HIGH_RESIDUAL_NRMSE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("frequency spread {spread} Hz is below {min} Hz")]
    DegenerateSpread { spread: f64, min: f64 },
    #[error("pre-event load must be positive")]
    BadLoad,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("traces have different lengths ({frequency} frequency vs {output} MW samples)")]
    Misaligned { frequency: usize, output: usize },
    #[error("trace covers {0} s; at least 30 s are required")]
    TooShort(f64),
    #[error("frequency never leaves the governor deadband")]
    NoExcursion,
    #[error("invalid search bounds: {0}")]
    BadSearch(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrfEstimate<T> {
    pub k_p: T,
    pub r2: T,
}

/// Load relief factor from (frequency, load) pairs recorded through an
/// excursion.
///
/// Regresses the per-unit load reduction `(P_load0 − P)/P_load0` against
/// the per-unit deviation `(f_n − f)/f_n`; the slope is `k_p`.
pub fn estimate_lrf<T: Scalar>(pairs: &[(T, T)], p_load0: T, f_n: T) -> Result<LrfEstimate<T>, CalibrationError> {
    if !(p_load0 > T::zero()) {
        return Err(CalibrationError::BadLoad);
    }
    if pairs.len() < MIN_LRF_PAIRS {
        return Err(FitError::TooFew {
            needed: MIN_LRF_PAIRS,
            got: pairs.len(),
        }
        .into());
    }
    let (lo, hi) = pairs
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &(f, _)| (lo.min(f), hi.max(f)));
    let spread = hi - lo;
    if !(spread >= T::lit(MIN_LRF_SPREAD)) {
        return Err(CalibrationError::DegenerateSpread {
            spread: spread.to_f64_lossy(),
            min: MIN_LRF_SPREAD,
        });
    }
    let xs: Vec<T> = pairs.iter().map(|&(f, _)| (f_n - f) / f_n).collect();
    let ys: Vec<T> = pairs.iter().map(|&(_, p)| (p_load0 - p) / p_load0).collect();
    let fit = linear_fit(&xs, &ys, MIN_LRF_PAIRS)?;
    Ok(LrfEstimate {
        k_p: fit.slope,
        r2: fit.r2,
    })
}

/// Static settings of a unit under calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitStaticParams<T> {
    pub rated_mw: T,
    pub spinning_reserve_mw: T,
    pub load_rejection_mw: T,
    pub mdrr: T,
    pub deadband_halfwidth: T,
    pub droop_fraction: T,
    pub nominal_frequency: T,
}

impl<T: Scalar> UnitStaticParams<T> {
    fn governor(&self, gain: T, time_constant: T) -> GovernorParams<T> {
        GovernorParams {
            rated_mw: self.rated_mw,
            spinning_reserve_mw: self.spinning_reserve_mw,
            load_rejection_mw: self.load_rejection_mw,
            gain,
            time_constant,
            mdrr: self.mdrr,
        }
    }

    /// Direction of the excursion in `freq`, judged by its largest deviation.
    fn excursion_of(&self, freq: &FrequencyTrace<T>) -> Excursion {
        let (lo, hi) = freq
            .samples
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &f| (lo.min(f), hi.max(f)));
        if hi - self.nominal_frequency > self.nominal_frequency - lo {
            Excursion::Over
        } else {
            Excursion::Under
        }
    }
}

/// Open-loop replay of the response pipeline against a measured frequency.
///
/// Output sample `k` is the limited response after `k` steps, starting from
/// zero at the first sample; the first sample is the pre-event operating
/// point.
pub fn replay_unit_response<T: Scalar>(
    freq: &FrequencyTrace<T>,
    params: &UnitStaticParams<T>,
    gain: T,
    time_constant: T,
) -> Vec<T> {
    let settings = DroopSettings {
        nominal_frequency: params.nominal_frequency,
        deadband_halfwidth: params.deadband_halfwidth,
        droop_fraction: params.droop_fraction,
        excursion: params.excursion_of(freq),
    };
    let mut ch = GovernorChannel::new(params.governor(gain, time_constant), settings, freq.samples[0]);
    let dt = freq.time_step;
    let mut out = Vec::with_capacity(freq.len());
    out.push(T::zero());
    let half = T::lit(0.5);
    for w in freq.samples.windows(2) {
        out.push(ch.advance(half * (w[0] + w[1]), dt));
    }
    out
}

/// Which frequency measurement drives a calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencySource {
    /// Measured at or near the unit terminals.
    Local,
    /// System centre-of-inertia estimate.
    CentreOfInertia,
}

/// Recorded frequency and MW output of one unit through an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEventTrace<T> {
    pub unit_id: UnitId,
    pub frequency: FrequencyTrace<T>,
    /// MW output on the frequency time base.
    pub output_mw: Vec<T>,
    /// Event onset on the trace time base, s.
    pub event_time: T,
    /// Mean output over the span just before onset, MW.
    pub pre_event_output_mw: T,
    pub params: UnitStaticParams<T>,
    pub frequency_source: FrequencySource,
}

impl<T: Scalar> UnitEventTrace<T> {
    /// Builds the trace, deriving the MW baseline from the 2 s before onset.
    pub fn new(
        unit_id: UnitId,
        frequency: FrequencyTrace<T>,
        output_mw: Vec<T>,
        event_time: T,
        params: UnitStaticParams<T>,
        frequency_source: FrequencySource,
    ) -> Result<Self, CalibrationError> {
        if frequency.len() != output_mw.len() {
            return Err(CalibrationError::Misaligned {
                frequency: frequency.len(),
                output: output_mw.len(),
            });
        }
        let duration = frequency.duration();
        if duration + frequency.time_step * T::lit(0.5) < T::lit(FIT_SPAN) {
            return Err(CalibrationError::TooShort(duration.to_f64_lossy()));
        }
        let onset = frequency.index_at(event_time);
        let first = frequency.index_at(event_time - T::lit(BASELINE_SPAN));
        let pre = if first < onset { &output_mw[first..onset] } else { &output_mw[..=onset] };
        let pre_event_output_mw = pre.iter().copied().sum::<T>() / T::from_usize_lossy(pre.len());
        Ok(UnitEventTrace {
            unit_id,
            frequency,
            output_mw,
            event_time,
            pre_event_output_mw,
            params,
            frequency_source,
        })
    }

    /// Sample range fitted: onset to 30 s after, clipped to the trace.
    fn fit_window(&self) -> std::ops::Range<usize> {
        let start = self.frequency.index_at(self.event_time);
        let end = self.frequency.index_at(self.event_time + T::lit(FIT_SPAN)) + 1;
        start..end.max(start + 2).min(self.frequency.len())
    }

    /// Measured response relative to the pre-event baseline, MW.
    fn target(&self, window: &std::ops::Range<usize>) -> Vec<T> {
        self.output_mw[window.clone()]
            .iter()
            .map(|&p| p - self.pre_event_output_mw)
            .collect()
    }
}

/// Grid and refinement settings for [`fit_unit_lag`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSearch<T> {
    pub gain_min: T,
    pub gain_max: T,
    pub gain_step: T,
    pub time_constant_min: T,
    pub time_constant_max: T,
    pub time_constant_step: T,
    /// Refinement stops when both step sizes fall below this.
    pub resolution: T,
}

impl<T: Scalar> Default for LagSearch<T> {
    fn default() -> Self {
        LagSearch {
            gain_min: T::lit(0.2),
            gain_max: T::lit(1.5),
            gain_step: T::lit(0.05),
            time_constant_min: T::lit(0.5),
            time_constant_max: T::lit(20.0),
            time_constant_step: T::lit(0.5),
            resolution: T::lit(1e-3),
        }
    }
}

impl<T: Scalar> LagSearch<T> {
    fn validate(&self) -> Result<(), CalibrationError> {
        if !(self.gain_min > T::zero() && self.gain_max >= self.gain_min && self.gain_step > T::zero()) {
            return Err(CalibrationError::BadSearch("gain range"));
        }
        if !(self.time_constant_min > T::zero()
            && self.time_constant_max >= self.time_constant_min
            && self.time_constant_step > T::zero())
        {
            return Err(CalibrationError::BadSearch("time constant range"));
        }
        if !(self.resolution > T::zero()) {
            return Err(CalibrationError::BadSearch("resolution"));
        }
        Ok(())
    }

    fn axis(min: T, max: T, step: T) -> Vec<T> {
        let n = ((max - min) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        (0..=n).map(|i| min + step * T::from_usize_lossy(i)).collect()
    }

    /// Grid points in evaluation order, gain-major.
    pub fn grid(&self) -> Vec<(T, T)> {
        let gains = Self::axis(self.gain_min, self.gain_max, self.gain_step);
        let tcs = Self::axis(self.time_constant_min, self.time_constant_max, self.time_constant_step);
        gains
            .iter()
            .flat_map(|&k| tcs.iter().map(move |&t| (k, t)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagFit<T> {
    pub gain: T,
    pub time_constant: T,
    /// Sum of squared errors over the fit window, MW².
    pub sse: T,
    /// RMS residual divided by the peak measured response.
    pub normalized_rmse: T,
    pub converged: bool,
    /// Residual too large for the lag model, typically AGC or other
    /// supplementary control acting during the event.
    pub high_residual: bool,
    pub diagnostic: Option<String>,
}

/// Sum of squared errors of a replay with `(gain, time_constant)` against
/// the measured response over the fit window.
pub fn lag_fit_sse<T: Scalar>(trace: &UnitEventTrace<T>, gain: T, time_constant: T) -> T {
    let window = trace.fit_window();
    let target = trace.target(&window);
    let freq = trace.frequency.slice(window);
    sse(&freq, &trace.params, &target, gain, time_constant)
}

fn sse<T: Scalar>(freq: &FrequencyTrace<T>, params: &UnitStaticParams<T>, target: &[T], gain: T, tc: T) -> T {
    replay_unit_response(freq, params, gain, tc)
        .iter()
        .zip(target)
        .map(|(&m, &y)| (m - y) * (m - y))
        .sum()
}

/// Fits the lag gain and time constant to a recorded unit response.
///
/// A coarse grid search seeds a coordinate refinement that halves its step
/// until it reaches `search.resolution`. The replay's clamps make the
/// objective non-smooth, so no derivatives are used.
pub fn fit_unit_lag<T: Scalar>(trace: &UnitEventTrace<T>, search: &LagSearch<T>) -> Result<LagFit<T>, CalibrationError> {
    search.validate()?;
    let window = trace.fit_window();
    let target = trace.target(&window);
    let freq = trace.frequency.slice(window);
    let params = &trace.params;

    let f_n = params.nominal_frequency;
    let max_dev = freq
        .samples
        .iter()
        .map(|&f| (f_n - f).abs())
        .fold(T::zero(), T::max);
    if !(max_dev > params.deadband_halfwidth) {
        return Err(CalibrationError::NoExcursion);
    }

    let peak = target.iter().map(|y| y.abs()).fold(T::zero(), T::max);
    let n = T::from_usize_lossy(target.len());
    let objective = |k: T, t: T| sse(&freq, params, &target, k, t);

    let mut best = (search.gain_min, search.time_constant_min, T::infinity());
    for (k, t) in search.grid() {
        let e = objective(k, t);
        if e < best.2 {
            best = (k, t, e);
        }
    }

    let clamp = |v: T, lo: T, hi: T| v.max(lo).min(hi);
    let (mut dk, mut dt) = (search.gain_step, search.time_constant_step);
    let mut iterations = 0usize;
    while (dk >= search.resolution || dt >= search.resolution) && iterations < 10_000 {
        iterations += 1;
        let mut improved = false;
        let candidates = [
            (best.0 + dk, best.1),
            (best.0 - dk, best.1),
            (best.0, best.1 + dt),
            (best.0, best.1 - dt),
        ];
        for (k, t) in candidates {
            let k = clamp(k, search.gain_min, search.gain_max);
            let t = clamp(t, search.time_constant_min, search.time_constant_max);
            let e = objective(k, t);
            if e < best.2 {
                best = (k, t, e);
                improved = true;
            }
        }
        if !improved {
            dk = dk * T::lit(0.5);
            dt = dt * T::lit(0.5);
        }
    }

    let (gain, time_constant, sse) = best;
    let nrmse = if peak > T::zero() { (sse / n).sqrt() / peak } else { T::infinity() };
    let flat = !(peak > T::lit(0.01) * params.rated_mw);
    let high_residual = !flat && nrmse > T::lit(HIGH_RESIDUAL_NRMSE);
    let converged = !flat && dk < search.resolution && dt < search.resolution;
    let diagnostic = if flat {
        Some(format!(
            "unit did not respond: peak deviation {peak} MW is below 1% of rating"
        ))
    } else if high_residual {
        Some(format!(
            "normalised RMS residual {nrmse} exceeds {HIGH_RESIDUAL_NRMSE}; response deviates from its droop target"
        ))
    } else if !converged {
        Some("refinement did not reach the requested resolution".to_owned())
    } else {
        None
    };
    Ok(LagFit {
        gain,
        time_constant,
        sse,
        normalized_rmse: nrmse,
        converged,
        high_residual,
        diagnostic,
    })
}
