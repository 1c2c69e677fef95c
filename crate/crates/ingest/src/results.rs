//! Append-only store of simulation results, one JSON record per line.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rtfs_core::{LoadModel, Outcome};
use serde::{Deserialize, Serialize};

use crate::IngestError;

pub const RESULTS_SCHEMA_VERSION: u32 = 1;
const RESULTS_FILE: &str = "results.jsonl";
const MODEL_FILE: &str = "load_inertia_model.json";

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    schema_version: u32,
    stored_at: DateTime<Utc>,
    result: Outcome,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelRecord {
    schema_version: u32,
    model: LoadModel,
}

/// Results directory. Writes are serialized; reads see whole lines only.
#[derive(Debug)]
pub struct ResultsStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResultsStore {
    /// Opens (creating if needed) the store in `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| IngestError::io(&dir, e))?;
        Ok(ResultsStore {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn results_path(&self) -> PathBuf {
        self.dir.join(RESULTS_FILE)
    }

    /// Appends one result.
    pub fn store(&self, result: &Outcome) -> Result<(), IngestError> {
        let record = Record {
            schema_version: RESULTS_SCHEMA_VERSION,
            stored_at: Utc::now(),
            result: result.clone(),
        };
        let mut line = serde_json::to_string(&record).map_err(|e| IngestError::Store(e.to_string()))?;
        line.push('\n');
        let path = self.results_path();
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| IngestError::io(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| IngestError::io(&path, e))?;
        f.flush().map_err(|e| IngestError::io(&path, e))
    }

    /// Results whose snapshot time lies in `[from, to]`, oldest first. A
    /// result stored again under the same snapshot time and label replaces
    /// the earlier record.
    pub fn load_history(
        &self,
        from: Option<DateTime<Utc>>,
        to: Option<DateTime<Utc>>,
    ) -> Result<Vec<Outcome>, IngestError> {
        let path = self.results_path();
        let f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(IngestError::io(&path, e)),
        };
        let mut out: Vec<Outcome> = Vec::new();
        let mut seen: HashMap<(DateTime<Utc>, String), usize> = HashMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| IngestError::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| IngestError::Store(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if rec.schema_version != RESULTS_SCHEMA_VERSION {
                return Err(IngestError::UnsupportedSchema(rec.schema_version.to_string()));
            }
            let r = rec.result;
            let t = r.snapshot_time;
            if from.is_some_and(|f| t < f) || to.is_some_and(|to| t > to) {
                continue;
            }
            match seen.get(&(t, r.scenario_label.clone())) {
                Some(&idx) => out[idx] = r,
                None => {
                    seen.insert((t, r.scenario_label.clone()), out.len());
                    out.push(r);
                }
            }
        }
        out.sort_by_key(|r| r.snapshot_time);
        Ok(out)
    }

    /// The most recently stored result.
    pub fn latest(&self) -> Result<Option<Outcome>, IngestError> {
        Ok(self.load_history(None, None)?.pop())
    }

    pub fn store_model(&self, model: &LoadModel) -> Result<(), IngestError> {
        let path = self.dir.join(MODEL_FILE);
        let rec = ModelRecord {
            schema_version: RESULTS_SCHEMA_VERSION,
            model: model.clone(),
        };
        let text = serde_json::to_string_pretty(&rec).map_err(|e| IngestError::Store(e.to_string()))?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::write(&path, text).map_err(|e| IngestError::io(&path, e))
    }

    /// The stored load inertia model, if one has been fitted.
    pub fn load_model(&self) -> Result<Option<LoadModel>, IngestError> {
        let path = self.dir.join(MODEL_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => {
                let rec: ModelRecord =
                    serde_json::from_str(&text).map_err(|e| IngestError::Store(format!("{}: {e}", path.display())))?;
                Ok(Some(rec.model))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(IngestError::io(&path, e)),
        }
    }
}
