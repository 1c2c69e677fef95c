#![allow(dead_code)]

use std::path::Path;

use chrono::{DateTime, Utc};
use rtfs_core::{Snapshot, Unit};
use rtfs_service::{RtfsService, ServiceConfig};

/// Six droop units and one synchronous unit without a governor; 11.5 GW·s
/// of generation inertia.
pub fn healthy(at: DateTime<Utc>) -> Snapshot {
    let spec = [
        ("CCGT1", 340.0, 200.0, 2600.0, 0.9, 3.0, 15.0, 110.0),
        ("COAL1", 340.0, 260.0, 2900.0, 0.8, 5.0, 6.0, 50.0),
        ("COAL2", 220.0, 180.0, 1900.0, 0.8, 5.0, 6.0, 40.0),
        ("GT1", 160.0, 100.0, 1100.0, 1.0, 2.0, 15.0, 55.0),
        ("GT2", 160.0, 110.0, 1100.0, 1.0, 2.0, 15.0, 45.0),
        ("CCGT2", 200.0, 150.0, 1100.0, 0.9, 3.5, 10.0, 45.0),
    ];
    let units = spec
        .iter()
        .map(|&(id, rated, out, ke, k, t, mdrr, reserve)| {
            Unit::new(id, rated, out, ke).with_droop(k, t, mdrr).with_reserve(reserve)
        })
        .chain([Unit::new("SYNC1", 200.0, 120.0, 800.0)])
        .collect();
    Snapshot::new(at, units, 1900.0)
}

/// Two small machines, no governor response and a light load.
pub fn low_inertia(at: DateTime<Utc>) -> Snapshot {
    let units = vec![Unit::new("A", 300.0, 250.0, 600.0), Unit::new("B", 300.0, 200.0, 600.0)];
    let mut s = Snapshot::new(at, units, 450.0);
    s.load_inertia_override = Some(0.0);
    s
}

pub fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        results_dir: dir.join("results"),
        snapshot_dir: dir.join("snapshots"),
        ..Default::default()
    }
}

pub fn service(dir: &Path) -> RtfsService {
    RtfsService::open(config(dir)).unwrap()
}
