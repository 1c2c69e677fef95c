//! Fleet snapshot documents.
//!
//! A snapshot document is JSON:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "snapshot": {
//!     "timestamp": "2020-02-10T03:00:00Z",
//!     "system_load_mw": 1900.0,
//!     "units": [
//!       { "id": "CCGT1", "rated_mw": 340.0, "output_mw": 250.0, "kinetic_energy": 2600.0 }
//!     ]
//!   }
//! }
//! ```
//!
//! Omitted fields take their defaults (50 Hz nominal, load relief factor 2,
//! lag gain 1 and time constant 5 s, droop off). Strict parsing rejects
//! fields it does not know; lenient parsing keeps them in [`Extras`] and
//! writes them back on serialization.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rtfs_core::calibration::DEFAULT_LOAD_RELIEF_FACTOR;
use rtfs_core::fleet::DEFAULT_NOMINAL_FREQUENCY;
use rtfs_core::{validate_snapshot, BlockId, Sdr, Snapshot, Unit, UnitId};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::IngestError;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

const DEFAULT_GAIN: f64 = 1.0;
const DEFAULT_TIME_CONSTANT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

/// Fields a lenient parse did not recognise, by location.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extras {
    pub document: Map<String, Value>,
    pub snapshot: Map<String, Value>,
    pub units: BTreeMap<UnitId, Map<String, Value>>,
    pub sdr_blocks: BTreeMap<BlockId, Map<String, Value>>,
}

impl Extras {
    pub fn is_empty(&self) -> bool {
        self.document.is_empty() && self.snapshot.is_empty() && self.units.is_empty() && self.sdr_blocks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDocument {
    pub schema_version: u32,
    pub snapshot: Snapshot,
    pub extras: Extras,
}

fn default_nominal() -> f64 {
    DEFAULT_NOMINAL_FREQUENCY
}
fn default_lrf() -> f64 {
    DEFAULT_LOAD_RELIEF_FACTOR
}
fn default_gain() -> f64 {
    DEFAULT_GAIN
}
fn default_time_constant() -> f64 {
    DEFAULT_TIME_CONSTANT
}
fn yes() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
struct DocumentWire {
    schema_version: u32,
    snapshot: SnapshotWire,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotWire {
    timestamp: DateTime<Utc>,
    system_load_mw: f64,
    #[serde(default = "default_nominal")]
    nominal_frequency: f64,
    #[serde(default)]
    pre_contingency_frequency: Option<f64>,
    #[serde(default = "default_lrf")]
    load_relief_factor: f64,
    #[serde(default)]
    load_inertia_override: Option<f64>,
    units: Vec<UnitWire>,
    #[serde(default)]
    sdr_blocks: Vec<SdrWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct UnitWire {
    id: String,
    rated_mw: f64,
    output_mw: f64,
    kinetic_energy: f64,
    #[serde(default)]
    spinning_reserve_mw: f64,
    #[serde(default)]
    load_rejection_mw: f64,
    #[serde(default)]
    droop_enabled: bool,
    #[serde(default = "default_gain")]
    gain: f64,
    #[serde(default = "default_time_constant")]
    time_constant: f64,
    #[serde(default)]
    mdrr: f64,
    #[serde(default = "yes")]
    online: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SdrWire {
    id: String,
    amount_mw: f64,
    trip_frequency: f64,
    #[serde(default)]
    pickup_delay: f64,
    #[serde(default = "yes")]
    armed: bool,
}

const DOCUMENT_FIELDS: &[&str] = &["schema_version", "snapshot"];
const SNAPSHOT_FIELDS: &[&str] = &[
    "timestamp",
    "system_load_mw",
    "nominal_frequency",
    "pre_contingency_frequency",
    "load_relief_factor",
    "load_inertia_override",
    "units",
    "sdr_blocks",
];
const UNIT_FIELDS: &[&str] = &[
    "id",
    "rated_mw",
    "output_mw",
    "kinetic_energy",
    "spinning_reserve_mw",
    "load_rejection_mw",
    "droop_enabled",
    "gain",
    "time_constant",
    "mdrr",
    "online",
];
const SDR_FIELDS: &[&str] = &["id", "amount_mw", "trip_frequency", "pickup_delay", "armed"];

/// Splits unknown keys off `obj`, or fails on the first one in strict mode.
fn take_unknown(
    obj: &mut Map<String, Value>,
    known: &[&str],
    path: &str,
    mode: ParseMode,
) -> Result<Map<String, Value>, IngestError> {
    let unknown: Vec<String> = obj.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
    if mode == ParseMode::Strict {
        if let Some(k) = unknown.first() {
            return Err(IngestError::UnknownField {
                path: if path.is_empty() { k.clone() } else { format!("{path}.{k}") },
            });
        }
    }
    Ok(unknown.into_iter().filter_map(|k| obj.remove_entry(&k)).collect())
}

fn id_of(obj: &Map<String, Value>, index: usize) -> String {
    obj.get("id")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .unwrap_or_else(|| format!("#{index}"))
}

fn split_extras(root: &mut Value, mode: ParseMode) -> Result<Extras, IngestError> {
    let mut extras = Extras::default();
    let Some(doc) = root.as_object_mut() else {
        return Ok(extras);
    };
    extras.document = take_unknown(doc, DOCUMENT_FIELDS, "", mode)?;
    let Some(snap) = doc.get_mut("snapshot").and_then(Value::as_object_mut) else {
        return Ok(extras);
    };
    extras.snapshot = take_unknown(snap, SNAPSHOT_FIELDS, "snapshot", mode)?;
    if let Some(units) = snap.get_mut("units").and_then(Value::as_array_mut) {
        for (i, u) in units.iter_mut().enumerate() {
            if let Some(obj) = u.as_object_mut() {
                let extra = take_unknown(obj, UNIT_FIELDS, &format!("snapshot.units[{i}]"), mode)?;
                if !extra.is_empty() {
                    extras.units.insert(UnitId(id_of(obj, i)), extra);
                }
            }
        }
    }
    if let Some(blocks) = snap.get_mut("sdr_blocks").and_then(Value::as_array_mut) {
        for (i, b) in blocks.iter_mut().enumerate() {
            if let Some(obj) = b.as_object_mut() {
                let extra = take_unknown(obj, SDR_FIELDS, &format!("snapshot.sdr_blocks[{i}]"), mode)?;
                if !extra.is_empty() {
                    extras.sdr_blocks.insert(BlockId(id_of(obj, i)), extra);
                }
            }
        }
    }
    Ok(extras)
}

fn located(err: serde_path_to_error::Error<serde_json::Error>) -> IngestError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    IngestError::Parse {
        path: if path == "." { None } else { Some(path) },
        line: inner.line(),
        column: inner.column(),
        message: inner.to_string(),
    }
}

/// Parses and validates a snapshot document.
pub fn parse_document(text: &str, mode: ParseMode) -> Result<SnapshotDocument, IngestError> {
    let mut root: Value = serde_json::from_str(text).map_err(|e| IngestError::Parse {
        path: None,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    match root.get("schema_version") {
        None => return Err(IngestError::MissingSchemaVersion),
        Some(v) if v.as_u64() != Some(SNAPSHOT_SCHEMA_VERSION as u64) => {
            return Err(IngestError::UnsupportedSchema(v.to_string()))
        }
        _ => {}
    }
    let extras = split_extras(&mut root, mode)?;
    // typed pass over the original text keeps line numbers in errors;
    // unknown keys were dealt with above and are skipped here
    let mut de = serde_json::Deserializer::from_str(text);
    let wire: DocumentWire = serde_path_to_error::deserialize(&mut de).map_err(located)?;
    let snapshot = validate_snapshot(from_wire(wire.snapshot))?;
    Ok(SnapshotDocument {
        schema_version: wire.schema_version,
        snapshot,
        extras,
    })
}

/// Parses a snapshot document and returns only the validated snapshot.
pub fn parse_snapshot(text: &str, mode: ParseMode) -> Result<Snapshot, IngestError> {
    parse_document(text, mode).map(|d| d.snapshot)
}

fn from_wire(w: SnapshotWire) -> Snapshot {
    Snapshot {
        timestamp: w.timestamp,
        units: w
            .units
            .into_iter()
            .map(|u| Unit {
                id: UnitId(u.id),
                rated_mw: u.rated_mw,
                output_mw: u.output_mw,
                kinetic_energy: u.kinetic_energy,
                spinning_reserve_mw: u.spinning_reserve_mw,
                load_rejection_mw: u.load_rejection_mw,
                droop_enabled: u.droop_enabled,
                gain: u.gain,
                time_constant: u.time_constant,
                mdrr: u.mdrr,
                online: u.online,
            })
            .collect(),
        sdr_blocks: w
            .sdr_blocks
            .into_iter()
            .map(|b| Sdr {
                id: BlockId(b.id),
                amount_mw: b.amount_mw,
                trip_frequency: b.trip_frequency,
                pickup_delay: b.pickup_delay,
                armed: b.armed,
            })
            .collect(),
        system_load_mw: w.system_load_mw,
        pre_contingency_frequency: w.pre_contingency_frequency.unwrap_or(w.nominal_frequency),
        nominal_frequency: w.nominal_frequency,
        load_relief_factor: w.load_relief_factor,
        load_inertia_override: w.load_inertia_override,
    }
}

fn to_wire(s: &Snapshot) -> SnapshotWire {
    SnapshotWire {
        timestamp: s.timestamp,
        system_load_mw: s.system_load_mw,
        nominal_frequency: s.nominal_frequency,
        pre_contingency_frequency: Some(s.pre_contingency_frequency),
        load_relief_factor: s.load_relief_factor,
        load_inertia_override: s.load_inertia_override,
        units: s
            .units
            .iter()
            .map(|u| UnitWire {
                id: u.id.0.clone(),
                rated_mw: u.rated_mw,
                output_mw: u.output_mw,
                kinetic_energy: u.kinetic_energy,
                spinning_reserve_mw: u.spinning_reserve_mw,
                load_rejection_mw: u.load_rejection_mw,
                droop_enabled: u.droop_enabled,
                gain: u.gain,
                time_constant: u.time_constant,
                mdrr: u.mdrr,
                online: u.online,
            })
            .collect(),
        sdr_blocks: s
            .sdr_blocks
            .iter()
            .map(|b| SdrWire {
                id: b.id.0.clone(),
                amount_mw: b.amount_mw,
                trip_frequency: b.trip_frequency,
                pickup_delay: b.pickup_delay,
                armed: b.armed,
            })
            .collect(),
    }
}

fn merge_by_id<'a>(items: Option<&mut Value>, extra_for: impl Fn(&str) -> Option<&'a Map<String, Value>>) {
    let Some(items) = items.and_then(Value::as_array_mut) else {
        return;
    };
    for item in items.iter_mut().filter_map(Value::as_object_mut) {
        let extra = item.get("id").and_then(Value::as_str).and_then(&extra_for);
        if let Some(extra) = extra {
            item.extend(extra.clone());
        }
    }
}

/// Serializes a document, writing any preserved extras back in place.
pub fn write_document(doc: &SnapshotDocument) -> String {
    let wire = DocumentWire {
        schema_version: doc.schema_version,
        snapshot: to_wire(&doc.snapshot),
    };
    let mut root = serde_json::to_value(&wire).expect("snapshot wire types always serialize");
    let ex = &doc.extras;
    if let Some(obj) = root.as_object_mut() {
        obj.extend(ex.document.clone());
        if let Some(snap) = obj.get_mut("snapshot").and_then(Value::as_object_mut) {
            snap.extend(ex.snapshot.clone());
            merge_by_id(snap.get_mut("units"), |id| ex.units.get(&UnitId::new(id)));
            merge_by_id(snap.get_mut("sdr_blocks"), |id| ex.sdr_blocks.get(&BlockId(id.to_owned())));
        }
    }
    serde_json::to_string_pretty(&root).expect("JSON values always serialize")
}

/// Serializes a bare snapshot at the current schema version.
pub fn write_snapshot(snapshot: &Snapshot) -> String {
    write_document(&SnapshotDocument {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        snapshot: snapshot.clone(),
        extras: Extras::default(),
    })
}
