//! Real-time frequency stability engine for a low-inertia islanded system.
//!
//! The crate predicts the frequency trajectory after a credible contingency
//! with a single-mass swing equation, per-unit first-order governor models,
//! load relief and under-frequency demand response, and provides the
//! offline estimators that calibrate the parameters SCADA cannot observe.
//!
//! All models are generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the service and the file
//! formats use.

pub mod calibration;
pub mod contingency;
pub mod fleet;
pub mod inertia;
pub mod scalar;
pub mod sim;
pub mod stats;

pub use calibration::{
    estimate_lrf, fit_unit_lag, lag_fit_sse, replay_unit_response, CalibrationError, FrequencySource,
    LagFit, LagSearch, LrfEstimate, UnitEventTrace, UnitStaticParams,
};
pub use contingency::{
    build_scenario, candidates, largest_inertia_unit, largest_mw_unit, worst_case, CandidateKind,
    ContingencyError,
};
pub use fleet::{
    total_generation_inertia, validate_snapshot, BlockId, Excursion, FrequencyTrace, GeneratorUnit,
    SdrBlock, SdrTrip, SimulationConfig, SimulationResult, Subject, SystemSnapshot, UnitId,
    ValidationReport, Violation, ViolationKind,
};
pub use inertia::{
    estimate_system_inertia, fit_load_inertia_model, load_inertia_from_event, max_rocof,
    predict_load_inertia, DisturbanceRecord, EventKind, InertiaError, LoadInertiaModel,
    LoadInertiaSample,
};
pub use scalar::Scalar;
pub use sim::{load_relief, simulate, ContingencyScenario, SimError, Stage};

pub type Unit = GeneratorUnit<f64>;
pub type Sdr = SdrBlock<f64>;
pub type Snapshot = SystemSnapshot<f64>;
pub type Config = SimulationConfig<f64>;
pub type Trace = FrequencyTrace<f64>;
pub type Outcome = SimulationResult<f64>;
pub type Scenario = ContingencyScenario<f64>;
pub type Record = DisturbanceRecord<f64>;
pub type LoadModel = LoadInertiaModel<f64>;
pub type UnitTrace = UnitEventTrace<f64>;
