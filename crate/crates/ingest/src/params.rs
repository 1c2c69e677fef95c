//! Calibrated per-unit lag parameters, merged into incoming snapshots.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use rtfs_core::{FrequencySource, Snapshot, UnitId};
use serde::{Deserialize, Serialize};

use crate::IngestError;

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitParameters {
    pub gain: f64,
    pub time_constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_source: Option<FrequencySource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
}

impl UnitParameters {
    pub fn new(gain: f64, time_constant: f64) -> Self {
        UnitParameters {
            gain,
            time_constant,
            fitted_at: None,
            frequency_source: None,
            event_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitParameterStore {
    pub schema_version: u32,
    pub units: BTreeMap<UnitId, UnitParameters>,
}

impl Default for UnitParameterStore {
    fn default() -> Self {
        UnitParameterStore {
            schema_version: PARAMS_SCHEMA_VERSION,
            units: BTreeMap::new(),
        }
    }
}

impl UnitParameterStore {
    /// Reads the store; a missing file is an empty store.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(IngestError::io(path, e)),
        };
        let store: Self = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
            path: None,
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if store.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(IngestError::UnsupportedSchema(store.schema_version.to_string()));
        }
        Ok(store)
    }

    /// Writes the store through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string_pretty(self).expect("parameter store always serializes");
        fs::write(&tmp, text).map_err(|e| IngestError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| IngestError::io(path, e))
    }

    pub fn insert(&mut self, unit: UnitId, params: UnitParameters) {
        self.units.insert(unit, params);
    }

    /// Overrides gain and time constant of every unit the store knows.
    /// Returns how many units were updated.
    pub fn apply(&self, snapshot: &mut Snapshot) -> usize {
        let mut n = 0;
        for u in &mut snapshot.units {
            if let Some(p) = self.units.get(&u.id) {
                u.gain = p.gain;
                u.time_constant = p.time_constant;
                n += 1;
            }
        }
        n
    }
}
