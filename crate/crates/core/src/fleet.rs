//! Fleet and system-state records consumed by the frequency models.
//!
//! Everything here is a plain value type. Behaviour is limited to
//! construction, validation and inertia bookkeeping.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Upper sanity bound for a governor lag gain.
pub const MAX_GAIN: f64 = 1.5;

/// Nominal frequency of the islanded system, Hz.
pub const DEFAULT_NOMINAL_FREQUENCY: f64 = 50.0;

/// Opaque identifier for a generating unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub String);

impl UnitId {
    pub fn new(id: impl Into<String>) -> Self {
        UnitId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UnitId {
    fn from(s: &str) -> Self {
        UnitId(s.to_owned())
    }
}

/// Opaque identifier for a demand-response block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub String);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BlockId {
    fn from(s: &str) -> Self {
        BlockId(s.to_owned())
    }
}

/// One synchronous machine as seen by the real-time model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorUnit<T> {
    pub id: UnitId,
    /// MW rating, also the base for the droop reference.
    pub rated_mw: T,
    /// Live MW output from SCADA.
    pub output_mw: T,
    /// Nameplate stored kinetic energy, MW·s. Independent of loading.
    pub kinetic_energy: T,
    /// Headroom available for under-frequency response, MW.
    pub spinning_reserve_mw: T,
    /// Room available for over-frequency response, MW.
    pub load_rejection_mw: T,
    pub droop_enabled: bool,
    /// First-order lag gain.
    pub gain: T,
    /// First-order lag time constant, s.
    pub time_constant: T,
    /// Maximum droop ramp rate, MW/s.
    pub mdrr: T,
    pub online: bool,
}

impl<T: Scalar> GeneratorUnit<T> {
    /// An online unit with no governor response. Fields can be adjusted with
    /// the `with_*` builders.
    pub fn new(id: impl Into<String>, rated_mw: T, output_mw: T, kinetic_energy: T) -> Self {
        GeneratorUnit {
            id: UnitId(id.into()),
            rated_mw,
            output_mw,
            kinetic_energy,
            spinning_reserve_mw: T::zero(),
            load_rejection_mw: T::zero(),
            droop_enabled: false,
            gain: T::one(),
            time_constant: T::one(),
            mdrr: T::zero(),
            online: true,
        }
    }

    /// Enables droop response with the given lag and ramp parameters.
    pub fn with_droop(mut self, gain: T, time_constant: T, mdrr: T) -> Self {
        self.droop_enabled = true;
        self.gain = gain;
        self.time_constant = time_constant;
        self.mdrr = mdrr;
        self
    }

    pub fn with_reserve(mut self, spinning_reserve_mw: T) -> Self {
        self.spinning_reserve_mw = spinning_reserve_mw;
        self
    }

    pub fn with_load_rejection(mut self, load_rejection_mw: T) -> Self {
        self.load_rejection_mw = load_rejection_mw;
        self
    }

    pub fn offline(mut self) -> Self {
        self.online = false;
        self
    }

    /// True when the unit contributes governor response to a simulation.
    pub fn provides_response(&self) -> bool {
        self.online && self.droop_enabled
    }

    fn check(&self, out: &mut Vec<Violation>) {
        let subject = Subject::Unit(self.id.clone());
        let mut push = |kind: ViolationKind, message: String| {
            out.push(Violation {
                subject: subject.clone(),
                kind,
                message,
            })
        };
        let fields = [
            ("rated_mw", self.rated_mw),
            ("output_mw", self.output_mw),
            ("kinetic_energy", self.kinetic_energy),
            ("spinning_reserve_mw", self.spinning_reserve_mw),
            ("load_rejection_mw", self.load_rejection_mw),
            ("gain", self.gain),
            ("time_constant", self.time_constant),
            ("mdrr", self.mdrr),
        ];
        let mut finite = true;
        for (name, v) in fields {
            if !v.is_finite() {
                finite = false;
                push(ViolationKind::NonFinite, format!("{name} is not finite"));
            }
        }
        if !finite {
            return;
        }
        if self.rated_mw <= T::zero() {
            push(ViolationKind::OutOfRange, "rated_mw must be positive".into());
        }
        if self.kinetic_energy < T::zero() {
            push(ViolationKind::OutOfRange, "kinetic_energy must be non-negative".into());
        }
        if self.time_constant <= T::zero() {
            push(ViolationKind::OutOfRange, "time_constant must be positive".into());
        }
        if self.gain <= T::zero() || self.gain > T::lit(MAX_GAIN) {
            push(
                ViolationKind::OutOfRange,
                format!("gain {} outside (0, {MAX_GAIN}]", self.gain),
            );
        }
        if self.output_mw < T::zero() {
            push(ViolationKind::OutOfRange, "output_mw must be non-negative".into());
        }
        if self.output_mw > self.rated_mw {
            push(
                ViolationKind::OutputExceedsRating,
                format!(
                    "output exceeds rating ({} MW > {} MW)",
                    self.output_mw, self.rated_mw
                ),
            );
        }
        if self.spinning_reserve_mw < T::zero() {
            push(ViolationKind::OutOfRange, "spinning_reserve_mw must be non-negative".into());
        }
        if self.spinning_reserve_mw > self.rated_mw - self.output_mw {
            push(
                ViolationKind::ReserveExceedsHeadroom,
                format!(
                    "spinning reserve {} MW exceeds headroom {} MW",
                    self.spinning_reserve_mw,
                    self.rated_mw - self.output_mw
                ),
            );
        }
        if self.load_rejection_mw < T::zero() {
            push(ViolationKind::OutOfRange, "load_rejection_mw must be non-negative".into());
        }
        if self.droop_enabled && self.mdrr <= T::zero() {
            push(
                ViolationKind::OutOfRange,
                "mdrr must be positive for a droop-enabled unit".into(),
            );
        }
    }
}

/// A contracted block of load tripped by an under-frequency relay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrBlock<T> {
    pub id: BlockId,
    pub amount_mw: T,
    /// Relay pickup frequency, Hz.
    pub trip_frequency: T,
    /// Time the frequency must stay below the setting before tripping, s.
    pub pickup_delay: T,
    pub armed: bool,
}

impl<T: Scalar> SdrBlock<T> {
    pub fn new(id: impl Into<String>, amount_mw: T, trip_frequency: T, pickup_delay: T) -> Self {
        SdrBlock {
            id: BlockId(id.into()),
            amount_mw,
            trip_frequency,
            pickup_delay,
            armed: true,
        }
    }

    fn check(&self, nominal: T, out: &mut Vec<Violation>) {
        let subject = Subject::Block(self.id.clone());
        let mut push = |kind, message: String| {
            out.push(Violation {
                subject: subject.clone(),
                kind,
                message,
            })
        };
        if !(self.amount_mw.is_finite()
            && self.trip_frequency.is_finite()
            && self.pickup_delay.is_finite())
        {
            push(ViolationKind::NonFinite, "block field is not finite".into());
            return;
        }
        if self.amount_mw < T::zero() {
            push(ViolationKind::OutOfRange, "amount_mw must be non-negative".into());
        }
        if self.trip_frequency >= nominal {
            push(
                ViolationKind::OutOfRange,
                format!(
                    "trip frequency {} Hz must be below nominal {} Hz",
                    self.trip_frequency, nominal
                ),
            );
        }
        if self.pickup_delay < T::zero() {
            push(ViolationKind::OutOfRange, "pickup_delay must be non-negative".into());
        }
    }
}

/// One timestamped picture of the islanded system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSnapshot<T> {
    pub timestamp: DateTime<Utc>,
    pub units: Vec<GeneratorUnit<T>>,
    pub sdr_blocks: Vec<SdrBlock<T>>,
    /// System load at nominal frequency, MW.
    pub system_load_mw: T,
    pub pre_contingency_frequency: T,
    pub nominal_frequency: T,
    /// Static load relief factor, dimensionless.
    pub load_relief_factor: T,
    /// Measured or operator-supplied load inertia, MW·s. When absent the
    /// regression model supplies it.
    pub load_inertia_override: Option<T>,
}

impl<T: Scalar> SystemSnapshot<T> {
    /// Snapshot at nominal frequency with the default load relief factor.
    pub fn new(timestamp: DateTime<Utc>, units: Vec<GeneratorUnit<T>>, system_load_mw: T) -> Self {
        let nominal = T::lit(DEFAULT_NOMINAL_FREQUENCY);
        SystemSnapshot {
            timestamp,
            units,
            sdr_blocks: Vec::new(),
            system_load_mw,
            pre_contingency_frequency: nominal,
            nominal_frequency: nominal,
            load_relief_factor: T::lit(crate::calibration::DEFAULT_LOAD_RELIEF_FACTOR),
            load_inertia_override: None,
        }
    }

    pub fn unit(&self, id: &UnitId) -> Option<&GeneratorUnit<T>> {
        self.units.iter().find(|u| &u.id == id)
    }

    pub fn online_units(&self) -> impl Iterator<Item = &GeneratorUnit<T>> {
        self.units.iter().filter(|u| u.online)
    }

    /// Total spinning reserve of online droop-enabled units, MW.
    pub fn responsive_reserve(&self) -> T {
        self.units
            .iter()
            .filter(|u| u.provides_response())
            .map(|u| u.spinning_reserve_mw)
            .sum()
    }
}

/// Sum of nameplate kinetic energy over online units, MW·s.
pub fn total_generation_inertia<T: Scalar>(snapshot: &SystemSnapshot<T>) -> T {
    snapshot.online_units().fold(T::zero(), |acc, u| acc + u.kinetic_energy)
}

/// Checks every invariant of the snapshot, its units and its SDR blocks.
///
/// Returns the snapshot unchanged when all hold, otherwise a report listing
/// every violation. Nothing is coerced.
pub fn validate_snapshot<T: Scalar>(
    snapshot: SystemSnapshot<T>,
) -> Result<SystemSnapshot<T>, ValidationReport> {
    let mut v = Vec::new();
    let sys = |kind, message: String| Violation {
        subject: Subject::System,
        kind,
        message,
    };
    let scalars = [
        ("system_load_mw", snapshot.system_load_mw),
        ("pre_contingency_frequency", snapshot.pre_contingency_frequency),
        ("nominal_frequency", snapshot.nominal_frequency),
        ("load_relief_factor", snapshot.load_relief_factor),
    ];
    let mut finite = true;
    for (name, x) in scalars {
        if !x.is_finite() {
            finite = false;
            v.push(sys(ViolationKind::NonFinite, format!("{name} is not finite")));
        }
    }
    if finite {
        if snapshot.system_load_mw <= T::zero() {
            v.push(sys(ViolationKind::OutOfRange, "system_load_mw must be positive".into()));
        }
        let f0 = snapshot.pre_contingency_frequency;
        if f0 < T::lit(45.0) || f0 > T::lit(55.0) {
            v.push(sys(
                ViolationKind::OutOfRange,
                format!("pre-contingency frequency {f0} Hz outside [45, 55]"),
            ));
        }
        if snapshot.nominal_frequency <= T::zero() {
            v.push(sys(ViolationKind::OutOfRange, "nominal_frequency must be positive".into()));
        }
        if snapshot.load_relief_factor < T::zero() {
            v.push(sys(
                ViolationKind::OutOfRange,
                "load_relief_factor must be non-negative".into(),
            ));
        }
    }
    if let Some(ke) = snapshot.load_inertia_override {
        if !ke.is_finite() || ke < T::zero() {
            v.push(sys(
                ViolationKind::OutOfRange,
                "load_inertia_override must be finite and non-negative".into(),
            ));
        }
    }
    if !snapshot.units.iter().any(|u| u.online) {
        v.push(sys(ViolationKind::NoOnlineUnits, "no online units".into()));
    }

    let mut seen = HashSet::new();
    for unit in &snapshot.units {
        if !seen.insert(&unit.id) {
            v.push(Violation {
                subject: Subject::Unit(unit.id.clone()),
                kind: ViolationKind::DuplicateId,
                message: "duplicate unit id".into(),
            });
        }
        unit.check(&mut v);
    }
    let mut seen = HashSet::new();
    for block in &snapshot.sdr_blocks {
        if !seen.insert(&block.id) {
            v.push(Violation {
                subject: Subject::Block(block.id.clone()),
                kind: ViolationKind::DuplicateId,
                message: "duplicate block id".into(),
            });
        }
        block.check(snapshot.nominal_frequency, &mut v);
    }

    if v.is_empty() {
        Ok(snapshot)
    } else {
        Err(ValidationReport { violations: v })
    }
}

/// What a violation refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Subject {
    System,
    Unit(UnitId),
    Block(BlockId),
    Config,
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::System => f.write_str("system"),
            Subject::Unit(id) => write!(f, "unit {id}"),
            Subject::Block(id) => write!(f, "sdr block {id}"),
            Subject::Config => f.write_str("config"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonFinite,
    OutOfRange,
    OutputExceedsRating,
    ReserveExceedsHeadroom,
    NoOnlineUnits,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: Subject,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Every invariant violation found in one validation pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn single(subject: Subject, kind: ViolationKind, message: impl Into<String>) -> Self {
        ValidationReport {
            violations: vec![Violation {
                subject,
                kind,
                message: message.into(),
            }],
        }
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} invariant violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// Integration and alarm settings for one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig<T> {
    /// Fixed integration step, s.
    pub time_step: T,
    /// Simulated horizon after the contingency, s.
    pub horizon: T,
    /// Governor deadband half-width, Hz.
    pub deadband_halfwidth: T,
    /// Per-unit droop (0.04 means full rating for a 4 % frequency change).
    pub droop_fraction: T,
    /// Stage-1 under-frequency load shedding setting, Hz.
    pub ufls_threshold: T,
    /// Over-frequency alarm setting, Hz.
    pub zenith_threshold: T,
}

impl<T: Scalar> Default for SimulationConfig<T> {
    fn default() -> Self {
        SimulationConfig {
            time_step: T::lit(0.01),
            horizon: T::lit(60.0),
            deadband_halfwidth: T::lit(0.025),
            droop_fraction: T::lit(0.04),
            ufls_threshold: T::lit(48.75),
            zenith_threshold: T::lit(51.0),
        }
    }
}

impl<T: Scalar> SimulationConfig<T> {
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut v = Vec::new();
        let mut bad = |message: &str| {
            v.push(Violation {
                subject: Subject::Config,
                kind: ViolationKind::OutOfRange,
                message: message.to_owned(),
            })
        };
        if !(self.time_step > T::zero() && self.time_step <= T::lit(0.1)) {
            bad("time_step must lie in (0, 0.1] s");
        }
        if !(self.horizon >= T::lit(10.0)) || !self.horizon.is_finite() {
            bad("horizon must be at least 10 s");
        }
        if !(self.deadband_halfwidth >= T::zero()) {
            bad("deadband_halfwidth must be non-negative");
        }
        if !(self.droop_fraction > T::zero()) {
            bad("droop_fraction must be positive");
        }
        if !self.ufls_threshold.is_finite() || !self.zenith_threshold.is_finite() {
            bad("alarm thresholds must be finite");
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations: v })
        }
    }
}

/// Uniformly sampled frequency, Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace<T> {
    /// Time of the first sample, s.
    pub start_time: T,
    pub time_step: T,
    pub samples: Vec<T>,
}

/// Plausible range for any recorded or simulated system frequency.
pub const FREQUENCY_BAND: (f64, f64) = (40.0, 60.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("time step must be positive and finite")]
    BadStep,
    #[error("trace has no samples")]
    Empty,
    #[error("sample {index} ({value} Hz) outside the [40, 60] Hz band")]
    OutOfBand { index: usize, value: f64 },
}

impl<T: Scalar> FrequencyTrace<T> {
    pub fn new(start_time: T, time_step: T, samples: Vec<T>) -> Result<Self, TraceError> {
        if !(time_step > T::zero()) || !time_step.is_finite() {
            return Err(TraceError::BadStep);
        }
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        let (lo, hi) = (T::lit(FREQUENCY_BAND.0), T::lit(FREQUENCY_BAND.1));
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, &f)| !(f >= lo && f <= hi))
        {
            return Err(TraceError::OutOfBand {
                index,
                value: value.to_f64_lossy(),
            });
        }
        Ok(FrequencyTrace {
            start_time,
            time_step,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, index: usize) -> T {
        self.start_time + self.time_step * T::from_usize_lossy(index)
    }

    /// Time spanned from first to last sample, s.
    pub fn duration(&self) -> T {
        self.time_step * T::from_usize_lossy(self.samples.len().saturating_sub(1))
    }

    /// Index of the sample closest to time `t`, clamped to the trace.
    pub fn index_at(&self, t: T) -> usize {
        let k = ((t - self.start_time) / self.time_step).round();
        if k <= T::zero() {
            0
        } else {
            k.to_usize().unwrap_or(usize::MAX).min(self.samples.len() - 1)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.samples
            .iter()
            .enumerate()
            .map(move |(i, &f)| (self.time_at(i), f))
    }

    /// The samples with index in `range`, re-based so the first kept sample
    /// keeps its original time.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        FrequencyTrace {
            start_time: self.time_at(range.start),
            time_step: self.time_step,
            samples: self.samples[range].to_vec(),
        }
    }
}

/// Direction of the frequency excursion a scenario produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excursion {
    /// Generation loss: frequency falls, governors raise output.
    Under,
    /// Load loss: frequency rises, governors back off.
    Over,
}

/// A tripped SDR block in a simulation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrTrip<T> {
    pub block: BlockId,
    pub time: T,
    pub amount_mw: T,
}

/// Everything produced by one contingency simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult<T> {
    pub scenario_label: String,
    /// Timestamp of the snapshot the scenario was built from.
    pub snapshot_time: DateTime<Utc>,
    pub excursion: Excursion,
    pub frequency: FrequencyTrace<T>,
    pub nadir_hz: T,
    pub nadir_time: T,
    pub zenith_hz: T,
    pub zenith_time: T,
    /// Governor response per unit, MW, on the frequency time base.
    pub per_unit_pfr: BTreeMap<UnitId, Vec<T>>,
    pub load_relief: Vec<T>,
    /// Cumulative tripped SDR, MW.
    pub sdr_total: Vec<T>,
    pub sdr_tripped: Vec<SdrTrip<T>>,
    /// Net power imbalance driving the swing equation, MW.
    pub total_imbalance: Vec<T>,
    pub ke_sys: T,
    pub ke_gen: T,
    pub ke_load: T,
    /// The trace left the plausible frequency band and was cut short. The
    /// nadir (or zenith) is then the band edge at the crossing time.
    pub collapsed: bool,
    pub alarm: bool,
}

impl<T: Scalar> SimulationResult<T> {
    /// Initial rate of change of frequency, Hz/s, from the first step.
    pub fn initial_rocof(&self) -> T {
        match self.frequency.samples.as_slice() {
            [a, b, ..] => (*b - *a) / self.frequency.time_step,
            _ => T::zero(),
        }
    }

    /// The extremum relevant to the excursion direction.
    pub fn extremum_hz(&self) -> T {
        match self.excursion {
            Excursion::Under => self.nadir_hz,
            Excursion::Over => self.zenith_hz,
        }
    }
}
