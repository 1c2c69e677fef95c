//! Credible contingency detection and scenario construction.

use std::cmp::Ordering;

use thiserror::Error;

use crate::fleet::{SimulationConfig, SimulationResult, SystemSnapshot, UnitId};
use crate::scalar::Scalar;
use crate::sim::{simulate, ContingencyScenario, ScenarioError, SimError, Stage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContingencyError {
    #[error("unit {0} not found in snapshot")]
    UnknownUnit(UnitId),
    #[error("unit {0} is offline")]
    UnitOffline(UnitId),
    #[error("snapshot has no online units")]
    NoOnlineUnits,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

fn cmp<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Online unit with the largest MW output. Ties go to the larger kinetic
/// energy, then to the lexicographically smaller id.
pub fn largest_mw_unit<T: Scalar>(snapshot: &SystemSnapshot<T>) -> Option<UnitId> {
    snapshot
        .online_units()
        .max_by(|a, b| {
            cmp(a.output_mw, b.output_mw)
                .then(cmp(a.kinetic_energy, b.kinetic_energy))
                .then_with(|| b.id.cmp(&a.id))
        })
        .map(|u| u.id.clone())
}

/// Online unit with the largest kinetic energy. Ties go to the larger
/// output, then to the lexicographically smaller id.
pub fn largest_inertia_unit<T: Scalar>(snapshot: &SystemSnapshot<T>) -> Option<UnitId> {
    snapshot
        .online_units()
        .max_by(|a, b| {
            cmp(a.kinetic_energy, b.kinetic_energy)
                .then(cmp(a.output_mw, b.output_mw))
                .then_with(|| b.id.cmp(&a.id))
        })
        .map(|u| u.id.clone())
}

/// Trip of `unit`: the unit leaves the fleet and its output becomes the
/// contingency. `stages` add later MW changes, e.g. a steam turbine that
/// follows its gas turbine a few seconds later.
pub fn build_scenario<T: Scalar>(
    snapshot: &SystemSnapshot<T>,
    unit: &UnitId,
    stages: Vec<Stage<T>>,
) -> Result<ContingencyScenario<T>, ContingencyError> {
    let tripped = snapshot
        .unit(unit)
        .ok_or_else(|| ContingencyError::UnknownUnit(unit.clone()))?;
    if !tripped.online {
        return Err(ContingencyError::UnitOffline(unit.clone()));
    }
    let mut base = snapshot.clone();
    base.units.retain(|u| &u.id != unit);
    let label = if stages.is_empty() {
        format!("trip {unit}")
    } else {
        format!("staged trip {unit}")
    };
    Ok(ContingencyScenario::new(base, -tripped.output_mw, label, stages)?)
}

/// Why a unit was chosen as a worst-case candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    LargestMw,
    LargestInertia,
    Both,
}

impl CandidateKind {
    pub fn tag(self) -> &'static str {
        match self {
            CandidateKind::LargestMw => "largest-mw",
            CandidateKind::LargestInertia => "largest-inertia",
            CandidateKind::Both => "largest-mw+inertia",
        }
    }
}

/// The distinct single-unit contingencies the worst case is chosen from.
pub fn candidates<T: Scalar>(snapshot: &SystemSnapshot<T>) -> Vec<(CandidateKind, UnitId)> {
    match (largest_mw_unit(snapshot), largest_inertia_unit(snapshot)) {
        (Some(a), Some(b)) if a == b => vec![(CandidateKind::Both, a)],
        (Some(a), Some(b)) => vec![(CandidateKind::LargestMw, a), (CandidateKind::LargestInertia, b)],
        _ => Vec::new(),
    }
}

/// Simulates the largest-MW and largest-inertia trips and returns the one
/// with the lower nadir. A tie keeps the largest-MW result.
pub fn worst_case<T: Scalar>(
    snapshot: &SystemSnapshot<T>,
    config: &SimulationConfig<T>,
    ke_load: T,
) -> Result<SimulationResult<T>, ContingencyError> {
    let cands = candidates(snapshot);
    if cands.is_empty() {
        return Err(ContingencyError::NoOnlineUnits);
    }
    let run = |(kind, id): &(CandidateKind, UnitId)| -> Result<SimulationResult<T>, ContingencyError> {
        let mut sc = build_scenario(snapshot, id, Vec::new())?;
        sc.label = format!("{}: trip {id}", kind.tag());
        Ok(simulate(&sc, config, ke_load)?)
    };
    let results: Vec<_> = if cands.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = cands.iter().map(|c| s.spawn(move || run(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("candidate simulation panicked"))
                .collect()
        })
    } else {
        cands.iter().map(run).collect()
    };
    let mut best: Option<SimulationResult<T>> = None;
    for r in results {
        let r = r?;
        match &best {
            Some(b) if !(r.nadir_hz < b.nadir_hz) => {}
            _ => best = Some(r),
        }
    }
    Ok(best.expect("at least one candidate"))
}
