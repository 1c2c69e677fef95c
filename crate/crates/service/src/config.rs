//! Service configuration, read from TOML with environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rtfs_core::{Config, LoadModel};
use rtfs_ingest::ParseMode;
use serde::{Deserialize, Serialize};

pub const SNAPSHOT_DIR_ENV: &str = "RTFS_SNAPSHOT_DIR";
pub const RESULTS_DIR_ENV: &str = "RTFS_RESULTS_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotSource {
    /// Newest document in `snapshot_dir`.
    #[default]
    Directory,
    /// `snapshot_file`, re-read whenever it changes.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

impl From<Strictness> for ParseMode {
    fn from(s: Strictness) -> Self {
        match s {
            Strictness::Strict => ParseMode::Strict,
            Strictness::Lenient => ParseMode::Lenient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Seconds between full calculations.
    pub cycle_period_s: f64,
    /// Seconds between looks at the snapshot source.
    pub poll_interval_s: f64,
    /// Snapshots older than this are not calculated, s.
    pub staleness_s: f64,
    pub snapshot_source: SnapshotSource,
    pub snapshot_dir: PathBuf,
    pub snapshot_file: Option<PathBuf>,
    pub parse_mode: Strictness,
    pub results_dir: PathBuf,
    /// Calibrated unit parameters merged into every snapshot.
    pub unit_params: Option<PathBuf>,
    /// Load inertia model used when the snapshot has no override. Falls
    /// back to a model stored in the results directory, then to the
    /// operational default.
    pub load_model: Option<LoadModel>,
    pub simulation: Config,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            cycle_period_s: 300.0,
            poll_interval_s: 4.0,
            staleness_s: 60.0,
            snapshot_source: SnapshotSource::Directory,
            snapshot_dir: "snapshots".into(),
            snapshot_file: None,
            parse_mode: Strictness::Strict,
            results_dir: "results".into(),
            unit_params: None,
            load_model: None,
            simulation: Config::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads `path`, applies the environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|source| ConfigError::Toml {
            path: path.display().to_string(),
            source,
        })?;
        cfg.apply_env(|k| std::env::var_os(k));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<std::ffi::OsString>) {
        if let Some(d) = var(SNAPSHOT_DIR_ENV) {
            self.snapshot_dir = d.into();
        }
        if let Some(d) = var(RESULTS_DIR_ENV) {
            self.results_dir = d.into();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("cycle_period_s", self.cycle_period_s),
            ("poll_interval_s", self.poll_interval_s),
            ("staleness_s", self.staleness_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.snapshot_source == SnapshotSource::File && self.snapshot_file.is_none() {
            return Err(ConfigError::Invalid("snapshot_source = \"file\" needs snapshot_file".into()));
        }
        self.simulation
            .validate()
            .map_err(|r| ConfigError::Invalid(r.to_string()))
    }

    pub fn cycle_period(&self) -> Duration {
        Duration::from_secs_f64(self.cycle_period_s)
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_secs_f64(self.poll_interval_s)
    }
}
