//! Access-log parsing and feature-table construction.
//!
//! Raw Common Log Format / Combined lines are parsed into [`LogRecord`]s,
//! aggregated into a gap-free [`TrafficSeries`], and turned into model-ready
//! [`FeatureTable`] rows carrying a time index, the traffic volumes and the
//! prediction target. Normalization is min-max to [0,1] with the scaler kept
//! for the inverse transform; cluster re-indexing re-sorts rows by
//! (cluster, time) and hands out fresh sequential indices.

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub host: String,
    pub user: Option<String>,
    pub timestamp: DateTime<Utc>,
    pub request: String,
    pub status: u16,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Hourly,
    Daily,
}

impl Granularity {
    pub fn step(&self) -> Duration {
        match self {
            Granularity::Hourly => Duration::hours(1),
            Granularity::Daily => Duration::days(1),
        }
    }

    /// Start of the bucket containing `ts`.
    pub fn bucket_start(&self, ts: DateTime<Utc>) -> DateTime<Utc> {
        let date = ts.date_naive();
        let naive = match self {
            Granularity::Hourly => date.and_hms_opt(ts.hour(), 0, 0).unwrap(),
            Granularity::Daily => date.and_hms_opt(0, 0, 0).unwrap(),
        };
        Utc.from_utc_datetime(&naive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub start: DateTime<Utc>,
    pub requests: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSeries {
    pub granularity: Granularity,
    pub buckets: Vec<Bucket>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub index: usize,
    pub time: DateTime<Utc>,
    pub requests: f64,
    pub bytes: f64,
    pub cluster: Option<usize>,
    pub target: f64,
}

/// Per-column (min, max) captured at normalization time. The target shares
/// the requests scaler: it is a request volume shifted by the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub requests: (f64, f64),
    pub bytes: (f64, f64),
}

fn scale(x: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        0.5
    }
}

fn unscale(y: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        lo + y * (hi - lo)
    } else {
        lo
    }
}

impl Scaler {
    pub fn fit(table: &FeatureTable) -> Scaler {
        let mut req = (f64::INFINITY, f64::NEG_INFINITY);
        let mut byt = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &table.rows {
            req.0 = req.0.min(r.requests).min(r.target);
            req.1 = req.1.max(r.requests).max(r.target);
            byt.0 = byt.0.min(r.bytes);
            byt.1 = byt.1.max(r.bytes);
        }
        Scaler {
            requests: req,
            bytes: byt,
        }
    }

    pub fn invert_target(&self, y: f64) -> f64 {
        unscale(y, self.requests)
    }

    pub fn invert_requests(&self, y: f64) -> f64 {
        unscale(y, self.requests)
    }

    pub fn invert_bytes(&self, y: f64) -> f64 {
        unscale(y, self.bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
    pub scaler: Option<Scaler>,
}

static CLF_RE: OnceLock<Regex> = OnceLock::new();

fn clf_regex() -> &'static Regex {
    CLF_RE.get_or_init(|| {
        // host ident user [timestamp] "request" status bytes [optional combined tail]
        Regex::new(
            r#"^(\S+) (\S+) (\S+) \[([^\]]+)\] "([^"]*)" (\S+) (\S+)(?: "[^"]*" "[^"]*")?\s*$"#,
        )
        .unwrap()
    })
}

/// Parse one Common Log Format or Combined Log Format line.
///
/// `-` byte counts map to 0, `-` users map to `None`; timestamps are
/// converted to UTC.
pub fn parse_log_line(line: &str) -> Result<LogRecord> {
    let err = |field: &'static str| Error::ParseLine {
        field,
        line: line.to_string(),
    };
    let caps = clf_regex().captures(line).ok_or_else(|| err("line"))?;
    let host = caps[1].to_string();
    let user = match &caps[3] {
        "-" => None,
        u => Some(u.to_string()),
    };
    let timestamp = DateTime::parse_from_str(&caps[4], "%d/%b/%Y:%H:%M:%S %z")
        .map_err(|_| err("timestamp"))?
        .with_timezone(&Utc);
    let request = caps[5].to_string();
    let status: u16 = caps[6].parse().map_err(|_| err("status"))?;
    if !(100..=599).contains(&status) {
        return Err(err("status"));
    }
    let bytes: u64 = match &caps[7] {
        "-" => 0,
        b => b.parse().map_err(|_| err("bytes"))?,
    };
    Ok(LogRecord {
        host,
        user,
        timestamp,
        request,
        status,
        bytes,
    })
}

/// Aggregate records into a contiguous traffic series; interior gaps are
/// zero-filled (an hour with no hits served zero requests).
pub fn aggregate(records: &[LogRecord], granularity: Granularity) -> Result<TrafficSeries> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to aggregate".into()));
    }
    let first = records
        .iter()
        .map(|r| granularity.bucket_start(r.timestamp))
        .min()
        .unwrap();
    let last = records
        .iter()
        .map(|r| granularity.bucket_start(r.timestamp))
        .max()
        .unwrap();
    let step = granularity.step();
    let n = ((last - first).num_seconds() / step.num_seconds()) as usize + 1;
    let mut buckets: Vec<Bucket> = (0..n)
        .map(|i| Bucket {
            start: first + step * i as i32,
            requests: 0,
            bytes: 0,
        })
        .collect();
    for r in records {
        let b = granularity.bucket_start(r.timestamp);
        let i = ((b - first).num_seconds() / step.num_seconds()) as usize;
        buckets[i].requests += 1;
        buckets[i].bytes += r.bytes;
    }
    Ok(TrafficSeries {
        granularity,
        buckets,
    })
}

/// Build prediction rows: row t carries the bucket-t features and the request
/// volume `horizon` buckets ahead as target. Indices run 1..n chronologically,
/// newest row highest.
pub fn build_features(series: &TrafficSeries, horizon: usize) -> Result<FeatureTable> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    if series.buckets.len() <= horizon {
        return Err(Error::InvalidInput(format!(
            "series has {} buckets, need more than horizon {}",
            series.buckets.len(),
            horizon
        )));
    }
    let n = series.buckets.len() - horizon;
    let rows = (0..n)
        .map(|t| FeatureRow {
            index: t + 1,
            time: series.buckets[t].start,
            requests: series.buckets[t].requests as f64,
            bytes: series.buckets[t].bytes as f64,
            cluster: None,
            target: series.buckets[t + horizon].requests as f64,
        })
        .collect();
    Ok(FeatureTable { rows, scaler: None })
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Min-max scale requests/bytes/target to [0,1] with statistics fitted on
    /// this table; constant columns map to 0.5.
    pub fn normalize(&self) -> Result<FeatureTable> {
        if self.rows.is_empty() {
            return Err(Error::InvalidInput("cannot normalize empty table".into()));
        }
        let scaler = Scaler::fit(self);
        Ok(self.normalize_with(scaler))
    }

    /// Apply a previously fitted scaler (test data uses train statistics).
    pub fn normalize_with(&self, scaler: Scaler) -> FeatureTable {
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                requests: scale(r.requests, scaler.requests),
                bytes: scale(r.bytes, scaler.bytes),
                target: scale(r.target, scaler.requests),
                ..r.clone()
            })
            .collect();
        FeatureTable {
            rows,
            scaler: Some(scaler),
        }
    }

    /// Undo `normalize_with` on the volume columns.
    pub fn denormalize(&self) -> Result<FeatureTable> {
        let scaler = self
            .scaler
            .ok_or_else(|| Error::InvalidInput("table has no scaler".into()))?;
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                requests: unscale(r.requests, scaler.requests),
                bytes: unscale(r.bytes, scaler.bytes),
                target: unscale(r.target, scaler.requests),
                ..r.clone()
            })
            .collect();
        Ok(FeatureTable { rows, scaler: None })
    }

    /// Split at a time boundary: rows strictly before it train, the rest test.
    pub fn split(&self, boundary: DateTime<Utc>) -> Result<(FeatureTable, FeatureTable)> {
        let (train, test): (Vec<_>, Vec<_>) =
            self.rows.iter().cloned().partition(|r| r.time < boundary);
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidInput(format!(
                "split boundary {boundary} leaves an empty side ({} train / {} test rows)",
                train.len(),
                test.len()
            )));
        }
        Ok((
            FeatureTable {
                rows: train,
                scaler: self.scaler,
            },
            FeatureTable {
                rows: test,
                scaler: self.scaler,
            },
        ))
    }

    /// Attach cluster ids, stable-sort by (cluster, original time order) and
    /// hand out fresh indices 1..n in the new order.
    pub fn reindex_by_cluster(&self, assignments: &[usize]) -> Result<FeatureTable> {
        if assignments.len() != self.rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} assignments for {} rows",
                assignments.len(),
                self.rows.len()
            )));
        }
        let mut rows: Vec<FeatureRow> = self
            .rows
            .iter()
            .zip(assignments)
            .map(|(r, &c)| FeatureRow {
                cluster: Some(c),
                ..r.clone()
            })
            .collect();
        rows.sort_by_key(|r| r.cluster.unwrap());
        for (i, r) in rows.iter_mut().enumerate() {
            r.index = i + 1;
        }
        Ok(FeatureTable {
            rows,
            scaler: self.scaler,
        })
    }
}

// --- CSV interfaces ---------------------------------------------------------

pub fn series_to_csv(series: &TrafficSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    w.write_record(["bucket_start", "requests", "bytes"])?;
    for b in &series.buckets {
        w.write_record([
            b.start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            b.requests.to_string(),
            b.bytes.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn series_from_csv(path: &Path, granularity: Granularity) -> Result<TrafficSeries> {
    let mut r = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let mut buckets = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let start = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|e| Error::InvalidInput(format!("bad bucket_start `{}`: {e}", &rec[0])))?
            .with_timezone(&Utc);
        let requests: u64 = rec[1]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad requests `{}`", &rec[1])))?;
        let bytes: u64 = rec[2]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad bytes `{}`", &rec[2])))?;
        buckets.push(Bucket {
            start,
            requests,
            bytes,
        });
    }
    if buckets.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: empty series file",
            path.display()
        )));
    }
    Ok(TrafficSeries {
        granularity,
        buckets,
    })
}

pub fn features_to_csv(table: &FeatureTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    w.write_record(["index", "requests", "bytes", "cluster", "target"])?;
    for r in &table.rows {
        w.write_record([
            r.index.to_string(),
            r.requests.to_string(),
            r.bytes.to_string(),
            r.cluster.map(|c| c.to_string()).unwrap_or_default(),
            r.target.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a feature CSV written by [`features_to_csv`]. The file format carries
/// no timestamps, so row times are reconstructed from `start` and the bucket
/// step; rows are assumed chronological (the ingest output order).
pub fn features_from_csv(
    path: &Path,
    start: DateTime<Utc>,
    granularity: Granularity,
) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let step = granularity.step();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str, v: &str| Error::InvalidInput(format!("bad {col} `{v}`"));
        rows.push(FeatureRow {
            index: rec[0].parse().map_err(|_| bad("index", &rec[0]))?,
            time: start + step * i as i32,
            requests: rec[1].parse().map_err(|_| bad("requests", &rec[1]))?,
            bytes: rec[2].parse().map_err(|_| bad("bytes", &rec[2]))?,
            cluster: if rec[3].is_empty() {
                None
            } else {
                Some(rec[3].parse().map_err(|_| bad("cluster", &rec[3]))?)
            },
            target: rec[4].parse().map_err(|_| bad("target", &rec[4]))?,
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: empty feature file",
            path.display()
        )));
    }
    Ok(FeatureTable { rows, scaler: None })
}
