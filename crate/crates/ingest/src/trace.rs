//! Fault-recorder trace files.
//!
//! ```text
//! # rtfs-trace v1
//! # event_id: 2020-01-04-trip
//! # start_utc: 2020-01-04T13:52:10Z
//! # sample_rate_hz: 50
//! # channels: frequency:Hz, output:MW
//! # event_offset_s: 2.0
//! time_s,frequency,output
//! 0.00,50.002,251.3
//! 0.02,50.001,251.2
//! ```
//!
//! Header keys other than the four required ones are kept in
//! [`TraceHeader::metadata`]. Timestamps are offsets from `start_utc`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use rtfs_core::{FrequencyTrace, Trace};

use crate::IngestError;

pub const TRACE_MAGIC: &str = "rtfs-trace v1";

/// Relative step tolerance for a trace to count as already uniform.
const UNIFORM_PPM: f64 = 1e-6;
/// Largest timestamp jitter that is repaired by resampling, s.
const MAX_JITTER: f64 = 1e-3;
/// Relative gap between declared and observed mean step reported as a
/// wrong sample rate rather than jitter.
const RATE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub event_id: String,
    pub start_utc: DateTime<Utc>,
    pub sample_rate_hz: f64,
    pub channels: Vec<Channel>,
    pub metadata: BTreeMap<String, String>,
}

impl TraceHeader {
    /// Numeric metadata value, if present and parseable.
    pub fn metadata_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(|v| v.trim().parse().ok())
    }
}

/// A parsed trace file with every channel on one uniform time base.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub time_step: f64,
    /// Channel samples in header order.
    pub data: Vec<Vec<f64>>,
    /// The input was resampled onto the uniform grid.
    pub resampled: bool,
}

impl TraceFile {
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Result<&[f64], IngestError> {
        self.header
            .channels
            .iter()
            .position(|c| c.name == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| IngestError::MissingChannel(name.to_owned()))
    }

    /// The frequency channel: one named `frequency`, else the first in Hz.
    pub fn frequency(&self) -> Result<Trace, IngestError> {
        let idx = self
            .header
            .channels
            .iter()
            .position(|c| c.name == "frequency")
            .or_else(|| self.header.channels.iter().position(|c| c.unit.eq_ignore_ascii_case("hz")))
            .ok_or_else(|| IngestError::MissingChannel("frequency".into()))?;
        Ok(FrequencyTrace::new(0.0, self.time_step, self.data[idx].clone())?)
    }

    /// Frequency and a MW channel on the same time base.
    pub fn frequency_and(&self, mw_channel: &str) -> Result<(Trace, Vec<f64>), IngestError> {
        let mw = self.channel(mw_channel)?.to_vec();
        Ok((self.frequency()?, mw))
    }

    /// Writes the file back out in the text format.
    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        let _ = writeln!(s, "# {TRACE_MAGIC}");
        let _ = writeln!(s, "# event_id: {}", h.event_id);
        let _ = writeln!(s, "# start_utc: {}", h.start_utc.to_rfc3339());
        let _ = writeln!(s, "# sample_rate_hz: {}", h.sample_rate_hz);
        let chans: Vec<_> = h.channels.iter().map(|c| format!("{}:{}", c.name, c.unit)).collect();
        let _ = writeln!(s, "# channels: {}", chans.join(", "));
        for (k, v) in &h.metadata {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let names: Vec<_> = h.channels.iter().map(|c| c.name.as_str()).collect();
        let _ = writeln!(s, "time_s,{}", names.join(","));
        for i in 0..self.len() {
            let _ = write!(s, "{}", i as f64 * self.time_step);
            for ch in &self.data {
                let _ = write!(s, ",{}", ch[i]);
            }
            s.push('\n');
        }
        s
    }
}

fn header_err(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::TraceHeader {
        line,
        message: message.into(),
    }
}

fn parse_header(lines: &[(usize, &str)]) -> Result<TraceHeader, IngestError> {
    let mut fields = BTreeMap::new();
    let mut magic = false;
    for &(no, raw) in lines {
        let body = raw.trim_start_matches('#').trim();
        if body.is_empty() {
            continue;
        }
        if body == TRACE_MAGIC {
            magic = true;
            continue;
        }
        let (k, v) = body
            .split_once(':')
            .ok_or_else(|| header_err(no, format!("expected `key: value`, got `{body}`")))?;
        fields.insert(k.trim().to_owned(), (no, v.trim().to_owned()));
    }
    if !magic {
        return Err(header_err(1, format!("missing `# {TRACE_MAGIC}` line")));
    }
    let mut take = |key: &str| fields.remove(key).ok_or_else(|| header_err(0, format!("missing `{key}`")));

    let (_, event_id) = take("event_id")?;
    let (no, start) = take("start_utc")?;
    let start_utc = DateTime::parse_from_rfc3339(&start)
        .map_err(|e| header_err(no, format!("start_utc: {e}")))?
        .with_timezone(&Utc);
    let (no, rate) = take("sample_rate_hz")?;
    let sample_rate_hz: f64 = rate
        .parse()
        .ok()
        .filter(|r: &f64| r.is_finite() && *r > 0.0)
        .ok_or_else(|| header_err(no, format!("sample_rate_hz `{rate}` is not a positive number")))?;
    let (no, chans) = take("channels")?;
    let channels = chans
        .split(',')
        .map(|c| {
            let (name, unit) = c.trim().split_once(':').unwrap_or((c.trim(), ""));
            if name.is_empty() {
                Err(header_err(no, "empty channel name"))
            } else {
                Ok(Channel {
                    name: name.trim().to_owned(),
                    unit: unit.trim().to_owned(),
                })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let metadata = fields.into_iter().map(|(k, (_, v))| (k, v)).collect();
    Ok(TraceHeader {
        event_id,
        start_utc,
        sample_rate_hz,
        channels,
        metadata,
    })
}

/// Parses a trace file, checking timestamps and resampling small jitter.
pub fn parse_trace_file(text: &str) -> Result<TraceFile, IngestError> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let split = lines.iter().position(|(_, l)| !l.trim_start().starts_with('#')).unwrap_or(lines.len());
    let header = parse_header(&lines[..split])?;
    let body_start = lines.get(split).map_or(0, |(no, _)| *no);

    let body: Vec<&str> = lines[split..].iter().map(|&(_, l)| l).collect();
    let body = body.join("\n");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| header_err(body_start, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if columns.first().map(String::as_str) != Some("time_s") {
        return Err(header_err(body_start, "first column must be `time_s`"));
    }
    // columns map onto declared channels by name
    let mut index = Vec::with_capacity(header.channels.len());
    for ch in &header.channels {
        let pos = columns
            .iter()
            .position(|c| c == &ch.name)
            .ok_or_else(|| IngestError::MissingChannel(ch.name.clone()))?;
        index.push(pos);
    }

    let mut times = Vec::new();
    let mut data = vec![Vec::new(); header.channels.len()];
    for (row, rec) in rdr.records().enumerate() {
        let line = body_start + 1 + row;
        let rec = rec.map_err(|e| IngestError::TraceRow {
            line,
            message: e.to_string(),
        })?;
        let num = |col: usize| -> Result<f64, IngestError> {
            let raw = rec.get(col).unwrap_or("");
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| IngestError::TraceRow {
                line,
                message: format!("column `{}`: `{raw}` is not a finite number", columns[col]),
            })
        };
        let t = num(0)?;
        if let Some(&prev) = times.last() {
            if t == prev {
                return Err(IngestError::DuplicateTimestamp { line, time: t });
            }
            if t < prev {
                return Err(IngestError::NonMonotonicTime { line, time: t });
            }
        }
        times.push(t);
        for (ch, &col) in index.iter().enumerate() {
            data[ch].push(num(col)?);
        }
    }
    if times.len() < 2 {
        return Err(IngestError::TraceRow {
            line: body_start,
            message: "a trace needs at least two samples".into(),
        });
    }

    let step = 1.0 / header.sample_rate_hz;
    let t0 = times[0];
    let worst = times
        .iter()
        .enumerate()
        .map(|(i, &t)| (t - (t0 + i as f64 * step)).abs())
        .fold(0.0, f64::max);
    let uniform = times.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= UNIFORM_PPM * step);
    let resampled = !uniform;
    if resampled {
        if worst > MAX_JITTER {
            let mean = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
            return Err(if ((mean - step) / step).abs() > RATE_TOLERANCE {
                IngestError::SampleRateMismatch {
                    declared_hz: header.sample_rate_hz,
                    observed_hz: 1.0 / mean,
                }
            } else {
                IngestError::Jitter {
                    max_seconds: worst,
                    limit_seconds: MAX_JITTER,
                }
            });
        }
        let n = ((times[times.len() - 1] - t0) / step + 1e-9).floor() as usize + 1;
        data = data.iter().map(|ch| resample(&times, ch, t0, step, n)).collect();
    }
    Ok(TraceFile {
        header,
        time_step: step,
        data,
        resampled,
    })
}

/// Linear interpolation of `(times, values)` onto `t0 + i·step`.
fn resample(times: &[f64], values: &[f64], t0: f64, step: f64, n: usize) -> Vec<f64> {
    let mut j = 0;
    (0..n)
        .map(|i| {
            let t = t0 + i as f64 * step;
            while j + 2 < times.len() && times[j + 1] < t {
                j += 1;
            }
            let (ta, tb) = (times[j], times[j + 1]);
            let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            values[j] + (values[j + 1] - values[j]) * w
        })
        .collect()
}
