//! Snapshot polling and the calculation cadence.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use chrono::{DateTime, Utc};
use rtfs_core::Snapshot;
use rtfs_ingest::{parse_snapshot, ParseMode};

use crate::config::{ServiceConfig, SnapshotSource};
use crate::engine::{CycleError, RtfsService};

/// Decides when a full calculation is due. Polls alone never trigger one:
/// a cycle needs a snapshot newer than the last calculated one, and after
/// the first cycle at least one period since the previous.
#[derive(Debug, Clone)]
pub struct Cadence {
    period: Duration,
    last_cycle: Option<Duration>,
}

impl Cadence {
    pub fn new(period: Duration) -> Self {
        Cadence {
            period,
            last_cycle: None,
        }
    }

    /// `now` is time since an arbitrary fixed origin.
    pub fn due(&self, now: Duration, newer_snapshot: bool) -> bool {
        newer_snapshot && self.last_cycle.map_or(true, |last| now.saturating_sub(last) >= self.period)
    }

    pub fn record(&mut self, now: Duration) {
        self.last_cycle = Some(now);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Signature {
    path: PathBuf,
    modified: Option<SystemTime>,
    len: u64,
}

/// Finds the newest snapshot document and parses it when it changes.
#[derive(Debug)]
pub struct SnapshotWatcher {
    source: SnapshotSource,
    dir: PathBuf,
    file: Option<PathBuf>,
    mode: ParseMode,
    seen: Option<Signature>,
    current: Option<Snapshot>,
}

impl SnapshotWatcher {
    pub fn new(config: &ServiceConfig) -> Self {
        SnapshotWatcher {
            source: config.snapshot_source,
            dir: config.snapshot_dir.clone(),
            file: config.snapshot_file.clone(),
            mode: config.parse_mode.into(),
            seen: None,
            current: None,
        }
    }

    fn signature(path: &Path) -> std::io::Result<Signature> {
        let meta = fs::metadata(path)?;
        Ok(Signature {
            path: path.to_owned(),
            modified: meta.modified().ok(),
            len: meta.len(),
        })
    }

    fn newest(&self) -> std::io::Result<Option<Signature>> {
        match self.source {
            SnapshotSource::File => {
                let Some(path) = &self.file else { return Ok(None) };
                match Self::signature(path) {
                    Ok(s) => Ok(Some(s)),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(e),
                }
            }
            SnapshotSource::Directory => {
                let mut best: Option<Signature> = None;
                for entry in fs::read_dir(&self.dir)? {
                    let path = entry?.path();
                    if path.extension().and_then(|e| e.to_str()) != Some("json") {
                        continue;
                    }
                    let Ok(sig) = Self::signature(&path) else { continue };
                    let newer = match &best {
                        None => true,
                        Some(b) => (sig.modified, &sig.path) > (b.modified, &b.path),
                    };
                    if newer {
                        best = Some(sig);
                    }
                }
                Ok(best)
            }
        }
    }

    /// The newest parsed snapshot. Errors describe the file that failed;
    /// the previously parsed snapshot stays current.
    pub fn poll(&mut self) -> Result<Option<&Snapshot>, String> {
        let sig = self.newest().map_err(|e| format!("{}: {e}", self.dir.display()))?;
        let Some(sig) = sig else { return Ok(self.current.as_ref()) };
        if self.seen.as_ref() != Some(&sig) {
            self.seen = Some(sig.clone());
            let text = fs::read_to_string(&sig.path).map_err(|e| format!("{}: {e}", sig.path.display()))?;
            let snap = parse_snapshot(&text, self.mode).map_err(|e| format!("{}: {e}", sig.path.display()))?;
            if self.current.as_ref().map_or(true, |c| snap.timestamp >= c.timestamp) {
                self.current = Some(snap);
            }
        }
        Ok(self.current.as_ref())
    }
}

/// One poll: read the source, update health, run a cycle when due.
pub async fn tick(
    svc: &Arc<RtfsService>,
    watcher: &mut SnapshotWatcher,
    cadence: &mut Cadence,
    since_start: Duration,
    now: DateTime<Utc>,
) {
    let snapshot = match watcher.poll() {
        Ok(s) => {
            svc.set_snapshot_error(None);
            s.cloned()
        }
        Err(e) => {
            tracing::warn!("snapshot: {e}");
            svc.set_snapshot_error(Some(e));
            watcher.current.clone()
        }
    };
    svc.observe_snapshot(snapshot.as_ref().map(|s| s.timestamp), now);
    let Some(snapshot) = snapshot else { return };
    let newer = svc.state().last_snapshot_time.map_or(true, |t| snapshot.timestamp > t);
    if !cadence.due(since_start, newer) {
        return;
    }
    let worker = svc.clone();
    let outcome = tokio::task::spawn_blocking(move || worker.run_cycle(snapshot, now)).await;
    match outcome {
        Ok(Ok(r)) => {
            cadence.record(since_start);
            tracing::info!(label = %r.scenario_label, nadir_hz = r.nadir_hz, alarm = svc.state().alarm, "cycle complete");
        }
        Ok(Err(e @ CycleError::Stale { .. })) => tracing::warn!("cycle skipped: {e}"),
        Ok(Err(e)) => tracing::error!("cycle failed: {e}"),
        Err(e) => tracing::error!("cycle task panicked: {e}"),
    }
}

/// Polls until `shutdown` resolves.
pub async fn run(svc: Arc<RtfsService>, shutdown: impl std::future::Future<Output = ()>) {
    let mut watcher = SnapshotWatcher::new(svc.config());
    let mut cadence = Cadence::new(svc.config().cycle_period());
    let mut interval = tokio::time::interval(svc.config().poll_interval());
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let start = tokio::time::Instant::now();
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            _ = interval.tick() => {
                tick(&svc, &mut watcher, &mut cadence, start.elapsed(), Utc::now()).await;
            }
        }
    }
}
