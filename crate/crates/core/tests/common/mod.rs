#![allow(dead_code)]

use chrono::{TimeZone, Utc};
use rtfs_core::{GeneratorUnit, SystemSnapshot};

pub fn ts() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 2, 10, 3, 0, 0).unwrap()
}

/// One inertia-only unit carrying all of the generation inertia.
pub fn inertia_only(ke_gen: f64, load_mw: f64, k_p: f64) -> SystemSnapshot<f64> {
    let mut s = SystemSnapshot::new(ts(), vec![GeneratorUnit::new("SYNC", 1000.0, 500.0, ke_gen)], load_mw);
    s.load_relief_factor = k_p;
    s
}

/// Closed-form deviation `f_n − f(t)` of the swing equation with a constant
/// imbalance and load relief only.
pub fn relief_only_deviation(t: f64, delta_p: f64, ke_sys: f64, load_mw: f64, k_p: f64, f_n: f64) -> f64 {
    let a = f_n * delta_p.abs() / (2.0 * ke_sys);
    let b = load_mw * k_p / (2.0 * ke_sys);
    if b == 0.0 {
        a * t
    } else {
        a / b * (1.0 - (-b * t).exp())
    }
}

/// Six droop units with case-study-like totals: 11.5 GW·s of generation
/// inertia and about 300 MW of responsive reserve.
pub fn case_study_fleet() -> Vec<GeneratorUnit<f64>> {
    let spec = [
        ("CCGT1", 340.0, 250.0, 2600.0, 0.9, 3.0, 12.0, 60.0),
        ("COAL1", 340.0, 280.0, 2900.0, 0.8, 5.0, 6.0, 50.0),
        ("COAL2", 220.0, 180.0, 1900.0, 0.8, 5.0, 5.0, 35.0),
        ("GT1", 160.0, 100.0, 1100.0, 1.0, 2.0, 15.0, 55.0),
        ("GT2", 160.0, 110.0, 1100.0, 1.0, 2.0, 15.0, 45.0),
        ("CCGT2", 200.0, 150.0, 1900.0, 0.9, 3.5, 10.0, 45.0),
    ];
    spec.iter()
        .map(|&(id, rated, out, ke, k, t, mdrr, reserve)| {
            GeneratorUnit::new(id, rated, out, ke).with_droop(k, t, mdrr).with_reserve(reserve)
        })
        .collect()
}
