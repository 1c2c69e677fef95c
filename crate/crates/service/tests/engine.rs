mod common;

use std::collections::BTreeMap;

use chrono::{Duration, Utc};
use common::*;
use rtfs_core::{worst_case, Config, UnitId};
use rtfs_service::engine::{alarm_state, apply_redispatch, CycleError, ManualScenario, WhatIfError};
use rtfs_service::{RtfsService, WhatIfRequest};

#[test]
fn healthy_snapshot_raises_no_alarm() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let now = Utc::now();
    let r = svc.run_cycle(healthy(now), now).unwrap();
    assert!(r.nadir_hz > 48.75 && r.nadir_hz < 50.0, "{}", r.nadir_hz);
    let st = svc.state();
    assert!(!st.alarm && !st.health.degraded());
    assert_eq!(st.cycles, 1);
    assert_eq!(svc.store().load_history(None, None).unwrap().len(), 1);
}

#[test]
fn run_cycle_matches_direct_worst_case() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let now = Utc::now();
    let snap = healthy(now);
    let direct = worst_case(&snap, &Config::default(), svc.resolve_ke_load(&snap)).unwrap();
    let r = svc.run_cycle(snap, now).unwrap();
    assert_eq!(*r, direct);
    assert!((r.ke_load - 2516.4).abs() < 0.1);
}

#[test]
fn load_inertia_override_wins() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let now = Utc::now();
    let mut snap = healthy(now);
    snap.load_inertia_override = Some(1234.0);
    assert_eq!(svc.run_cycle(snap, now).unwrap().ke_load, 1234.0);
}

#[test]
fn low_inertia_snapshot_raises_alarm() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let now = Utc::now();
    let r = svc.run_cycle(low_inertia(now), now).unwrap();
    assert!(r.nadir_hz < 48.75);
    assert!(svc.state().alarm && svc.status().alarm);
}

#[test]
fn alarm_clears_after_two_clean_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let t = Utc::now();
    svc.run_cycle(low_inertia(t), t).unwrap();
    assert!(svc.state().alarm);
    svc.run_cycle(healthy(t + Duration::seconds(1)), t + Duration::seconds(1)).unwrap();
    assert!(svc.state().alarm, "one clean cycle is not enough");
    svc.run_cycle(healthy(t + Duration::seconds(2)), t + Duration::seconds(2)).unwrap();
    assert!(!svc.state().alarm);
}

#[test]
fn alarm_is_a_function_of_stored_results() {
    let dir = tempfile::tempdir().unwrap();
    let t = Utc::now();
    {
        let svc = service(dir.path());
        svc.run_cycle(low_inertia(t), t).unwrap();
        svc.run_cycle(healthy(t + Duration::seconds(1)), t + Duration::seconds(1)).unwrap();
    }
    let svc = service(dir.path());
    let st = svc.state();
    let history = svc.store().load_history(None, None).unwrap();
    assert_eq!(st.latest.as_deref(), history.last());
    assert_eq!(st.alarm, alarm_state(history.last(), history[0].alarm));
    assert!(st.alarm);
}

#[test]
fn stale_snapshot_is_skipped_and_previous_result_kept() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let t = Utc::now();
    let first = svc.run_cycle(healthy(t), t).unwrap();
    let later = t + Duration::seconds(200);
    let err = svc.run_cycle(low_inertia(t + Duration::seconds(100)), later).unwrap_err();
    assert!(matches!(err, CycleError::Stale { .. }), "{err}");
    let st = svc.state();
    assert!(st.health.stale_snapshot && svc.status().degraded);
    assert_eq!(st.latest.as_ref(), Some(&first));
    assert!(!st.alarm);
    assert_eq!(svc.store().load_history(None, None).unwrap().len(), 1);
}

#[test]
fn missing_fresh_snapshot_flags_degraded() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let t = Utc::now();
    svc.run_cycle(healthy(t), t).unwrap();
    assert!(!svc.observe_snapshot(Some(t), t + Duration::seconds(30)));
    assert!(svc.observe_snapshot(Some(t), t + Duration::seconds(61)));
    assert!(svc.status().stale_snapshot);
    svc.run_cycle(healthy(t + Duration::seconds(62)), t + Duration::seconds(62)).unwrap();
    assert!(!svc.status().degraded);
}

#[test]
fn same_snapshot_is_not_recalculated() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    let t = Utc::now();
    svc.run_cycle(healthy(t), t).unwrap();
    assert!(matches!(svc.run_cycle(healthy(t), t), Err(CycleError::NotNewer(_))));
    assert_eq!(svc.state().cycles, 1);
}

#[test]
fn storage_failure_degrades_but_publishes() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    std::fs::create_dir_all(dir.path().join("results/results.jsonl")).unwrap();
    let t = Utc::now();
    let r = svc.run_cycle(healthy(t), t).unwrap();
    let st = svc.state();
    assert!(st.health.storage_error.is_some() && svc.status().degraded);
    assert_eq!(st.latest.as_ref(), Some(&r));
}

fn calculated(dir: &std::path::Path) -> RtfsService {
    let svc = service(dir);
    let t = Utc::now();
    svc.run_cycle(healthy(t), t).unwrap();
    svc
}

#[test]
fn empty_whatif_matches_operational_result() {
    let dir = tempfile::tempdir().unwrap();
    let svc = calculated(dir.path());
    let op = svc.state().latest.clone().unwrap();
    let w = svc.whatif(&WhatIfRequest::default()).unwrap();
    assert_eq!(w.scenario_label, format!("what-if: {}", op.scenario_label));
    assert_eq!(w.frequency, op.frequency);
    assert_eq!(w.nadir_hz, op.nadir_hz);
}

#[test]
fn whatif_leaves_operational_state_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let svc = calculated(dir.path());
    let before = svc.state();
    let status = svc.status();
    let history = std::fs::read(dir.path().join("results/results.jsonl")).unwrap();
    let req = WhatIfRequest {
        deltas: BTreeMap::from([(UnitId::new("COAL1"), 60.0)]),
        allow_unbalanced: true,
        ..Default::default()
    };
    svc.whatif(&req).unwrap();
    svc.whatif(&WhatIfRequest::default()).unwrap();
    assert!(std::sync::Arc::ptr_eq(&before, &svc.state()));
    assert_eq!(svc.status(), status);
    assert_eq!(std::fs::read(dir.path().join("results/results.jsonl")).unwrap(), history);
}

#[test]
fn shifting_output_off_the_largest_unit_does_not_lower_the_nadir() {
    let dir = tempfile::tempdir().unwrap();
    let svc = calculated(dir.path());
    let op = svc.state().latest.clone().unwrap();
    let req = WhatIfRequest {
        deltas: BTreeMap::from([(UnitId::new("COAL1"), -50.0), (UnitId::new("SYNC1"), 50.0)]),
        ..Default::default()
    };
    let w = svc.whatif(&req).unwrap();
    assert!(w.nadir_hz >= op.nadir_hz, "{} < {}", w.nadir_hz, op.nadir_hz);
}

#[test]
fn over_rating_delta_rejected_per_unit() {
    let dir = tempfile::tempdir().unwrap();
    let svc = calculated(dir.path());
    let req = WhatIfRequest {
        deltas: BTreeMap::from([
            (UnitId::new("GT1"), 100.0),
            (UnitId::new("COAL2"), -100.0),
            (UnitId::new("NOPE"), 0.0),
        ]),
        ..Default::default()
    };
    match svc.whatif(&req).unwrap_err() {
        WhatIfError::Rejected(d) => {
            let units: Vec<_> = d.iter().filter_map(|d| d.unit.as_ref().map(|u| u.as_str())).collect();
            assert_eq!(units, ["GT1", "NOPE"]);
            assert!(d[0].message.contains("160"), "{}", d[0].message);
        }
        e => panic!("{e}"),
    }
}

#[test]
fn unbalanced_deltas_need_explicit_permission() {
    let dir = tempfile::tempdir().unwrap();
    let svc = calculated(dir.path());
    let mut req = WhatIfRequest {
        deltas: BTreeMap::from([(UnitId::new("GT1"), 20.0)]),
        ..Default::default()
    };
    assert!(matches!(svc.whatif(&req), Err(WhatIfError::Rejected(_))));
    req.allow_unbalanced = true;
    assert!(svc.whatif(&req).is_ok());
}

#[test]
fn redispatch_moves_reserve_the_other_way() {
    let snap = healthy(Utc::now());
    let out = apply_redispatch(
        &snap,
        &BTreeMap::from([(UnitId::new("CCGT1"), -40.0), (UnitId::new("CCGT2"), 40.0)]),
        false,
    )
    .unwrap();
    let u = |id: &str| out.unit(&UnitId::new(id)).unwrap().clone();
    assert_eq!((u("CCGT1").output_mw, u("CCGT1").spinning_reserve_mw), (160.0, 150.0));
    assert_eq!((u("CCGT2").output_mw, u("CCGT2").spinning_reserve_mw), (190.0, 5.0));
}

#[test]
fn manual_scenario_runs_and_needs_one_target() {
    let dir = tempfile::tempdir().unwrap();
    let svc = calculated(dir.path());
    let req = WhatIfRequest {
        scenario: Some(ManualScenario {
            delta_p_mw: Some(-100.0),
            ..Default::default()
        }),
        ..Default::default()
    };
    let w = svc.whatif(&req).unwrap();
    assert_eq!(w.scenario_label, "what-if: manual");
    let both = WhatIfRequest {
        scenario: Some(ManualScenario {
            unit: Some(UnitId::new("GT1")),
            delta_p_mw: Some(-100.0),
            ..Default::default()
        }),
        ..Default::default()
    };
    assert!(matches!(svc.whatif(&both), Err(WhatIfError::Rejected(_))));
}

#[test]
fn whatif_before_any_cycle_has_no_base() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path());
    assert!(matches!(svc.whatif(&WhatIfRequest::default()), Err(WhatIfError::NoBase)));
}
