//! Deterministic synthetic web-traffic generator.
//!
//! Stands in for a real server corpus: weekday/weekend split, a daily peak
//! window, multiplicative uniform noise, and optional raw CLF log emission so
//! the parser can be exercised end to end.

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Bucket, Granularity, TrafficSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub base_daily_requests: u64,
    pub weekday_multiplier: f64,
    /// Inclusive hour range of the daily peak, within 0..=23.
    pub peak_hours: (u32, u32),
    pub peak_multiplier: f64,
    pub noise_fraction: f64,
    pub bytes_per_request_mean: u64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            base_daily_requests: 24_000,
            weekday_multiplier: 1.5,
            peak_hours: (11, 17),
            peak_multiplier: 2.0,
            noise_fraction: 0.15,
            bytes_per_request_mean: 8 * 1024,
        }
    }
}

impl TrafficProfile {
    fn validate(&self) -> Result<()> {
        if self.weekday_multiplier <= 0.0 || self.peak_multiplier <= 0.0 {
            return Err(Error::InvalidInput("multipliers must be positive".into()));
        }
        if self.peak_hours.0 > 23 || self.peak_hours.1 > 23 || self.peak_hours.0 > self.peak_hours.1
        {
            return Err(Error::InvalidInput("peak window must lie within 0..23".into()));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::InvalidInput("noise fraction must be in [0,1)".into()));
        }
        Ok(())
    }
}

fn is_weekday(d: Weekday) -> bool {
    !matches!(d, Weekday::Sat | Weekday::Sun)
}

/// Generate an hourly traffic series of `days` days starting at `start`
/// midnight UTC; deterministic for a given seed.
pub fn generate(
    profile: &TrafficProfile,
    start: NaiveDate,
    days: u32,
    seed: u64,
) -> Result<TrafficSeries> {
    if days == 0 {
        return Err(Error::InvalidInput("need at least one day".into()));
    }
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_hourly = profile.base_daily_requests as f64 / 24.0;
    let start_dt: DateTime<Utc> = Utc.from_utc_datetime(&start.and_hms_opt(0, 0, 0).unwrap());
    let mut buckets = Vec::with_capacity(days as usize * 24);
    for h in 0..(days as i64 * 24) {
        let ts = start_dt + Duration::hours(h);
        let mut expected = base_hourly;
        if is_weekday(ts.weekday()) {
            expected *= profile.weekday_multiplier;
        }
        let hour = ts.hour();
        if hour >= profile.peak_hours.0 && hour <= profile.peak_hours.1 {
            expected *= profile.peak_multiplier;
        }
        let nf = profile.noise_fraction;
        let noise = if nf > 0.0 { rng.gen_range(-nf..nf) } else { 0.0 };
        let requests = (expected * (1.0 + noise)).round().max(0.0) as u64;
        let bnoise = if nf > 0.0 { rng.gen_range(-nf..nf) } else { 0.0 };
        let bytes = (requests as f64 * profile.bytes_per_request_mean as f64 * (1.0 + bnoise))
            .round()
            .max(0.0) as u64;
        buckets.push(Bucket {
            start: ts,
            requests,
            bytes,
        });
    }
    Ok(TrafficSeries {
        granularity: Granularity::Hourly,
        buckets,
    })
}

/// Roll an hourly series up to daily totals.
pub fn to_daily(series: &TrafficSeries) -> Result<TrafficSeries> {
    if series.granularity != Granularity::Hourly {
        return Err(Error::InvalidInput("expected an hourly series".into()));
    }
    let mut buckets: Vec<Bucket> = Vec::new();
    for b in &series.buckets {
        let day = Granularity::Daily.bucket_start(b.start);
        match buckets.last_mut() {
            Some(last) if last.start == day => {
                last.requests += b.requests;
                last.bytes += b.bytes;
            }
            _ => buckets.push(Bucket {
                start: day,
                requests: b.requests,
                bytes: b.bytes,
            }),
        }
    }
    Ok(TrafficSeries {
        granularity: Granularity::Daily,
        buckets,
    })
}

/// Emit raw CLF lines reproducing the series bucket totals: requests are
/// spread evenly within each hour and the byte volume split across them.
pub fn to_log_lines(series: &TrafficSeries) -> Vec<String> {
    let mut lines = Vec::new();
    for b in &series.buckets {
        if b.requests == 0 {
            continue;
        }
        let per_req = b.bytes / b.requests;
        let mut remainder = b.bytes - per_req * b.requests;
        let span = series.granularity.step().num_seconds() as u64;
        for i in 0..b.requests {
            let offset = i * span / b.requests;
            let ts = b.start + Duration::seconds(offset as i64);
            let bytes = per_req + if remainder > 0 { 1 } else { 0 };
            if remainder > 0 {
                remainder -= 1;
            }
            lines.push(format!(
                "10.0.{}.{} - - [{}] \"GET /page/{} HTTP/1.0\" 200 {}",
                i % 256,
                (i / 256) % 256,
                ts.format("%d/%b/%Y:%H:%M:%S +0000"),
                i % 100,
                bytes
            ));
        }
    }
    lines
}
