//! Market data ingestion, validation, resampling and windowing.
//!
//! The bar series is the sole price input of the toolkit: contiguous
//! fixed-frequency OHLCV bars indexed by their UTC bar-open timestamp.
//! Funding rates are a separate external series joined onto the bar grid
//! as a step function (carry-forward only, never backfilled).
//!
//! Validation never mutates or repairs data: gaps and sanity violations
//! are enumerated in a [`ValidationReport`] and a fatal report must abort
//! any downstream pipeline step.

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Errors produced by market-data construction and I/O.
#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("bar series is empty")]
    EmptySeries,

    #[error("bar frequency must be a positive number of hours")]
    ZeroFrequency,

    #[error("timestamps not strictly increasing at {0}")]
    NonMonotonicTimestamps(DateTime<Utc>),

    #[error("timestamp {0} is not aligned to the {1}h grid of the series")]
    OffGridTimestamp(DateTime<Utc>, u32),

    #[error("destination frequency {dst}h is not an integer multiple of source frequency {src}h")]
    NonMultipleFrequency { src: u32, dst: u32 },

    #[error("window [{start}, {end}) selects no bars")]
    EmptyWindow {
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },

    #[error("window start {0} must be before window end {1}")]
    InvalidWindow(DateTime<Utc>, DateTime<Utc>),

    #[error("series too short: need at least {needed} bars, have {available}")]
    TooShort { needed: usize, available: usize },

    #[error("funding fallback rate must be finite, got {0}")]
    NonFiniteFallback(f64),

    #[error("csv format error at line {line}: {msg}")]
    CsvFormat { line: usize, msg: String },

    #[error("mixed timestamp forms in csv (epoch-milliseconds and ISO-8601 cannot be combined)")]
    MixedTimestampForms,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A single OHLCV bar indexed by its UTC bar-open timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub ts: DateTime<Utc>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

/// Ordered OHLCV bars at a fixed frequency.
///
/// Construction enforces strictly increasing, grid-aligned timestamps;
/// gaps (missing grid slots) are allowed here and reported by
/// [`validate_series`], never filled.
#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    bars: Vec<Bar>,
    freq_hours: u32,
}

impl BarSeries {
    pub fn new(bars: Vec<Bar>, freq_hours: u32) -> Result<Self, MarketDataError> {
        if freq_hours == 0 {
            return Err(MarketDataError::ZeroFrequency);
        }
        if bars.is_empty() {
            return Err(MarketDataError::EmptySeries);
        }
        let step = freq_hours as i64 * 3600;
        let first = bars[0].ts.timestamp();
        for pair in bars.windows(2) {
            if pair[1].ts <= pair[0].ts {
                return Err(MarketDataError::NonMonotonicTimestamps(pair[1].ts));
            }
        }
        for bar in &bars {
            if (bar.ts.timestamp() - first).rem_euclid(step) != 0 {
                return Err(MarketDataError::OffGridTimestamp(bar.ts, freq_hours));
            }
        }
        Ok(Self { bars, freq_hours })
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn freq_hours(&self) -> u32 {
        self.freq_hours
    }

    pub fn first_ts(&self) -> DateTime<Utc> {
        self.bars[0].ts
    }

    pub fn last_ts(&self) -> DateTime<Utc> {
        self.bars[self.bars.len() - 1].ts
    }

    /// Bars whose open timestamp falls in `[window.start, window.end)`.
    pub fn slice_window(&self, window: &WindowSpec) -> Result<BarSeries, MarketDataError> {
        let bars: Vec<Bar> = self
            .bars
            .iter()
            .filter(|b| b.ts >= window.start && b.ts < window.end)
            .copied()
            .collect();
        if bars.is_empty() {
            return Err(MarketDataError::EmptyWindow {
                start: window.start,
                end: window.end,
            });
        }
        BarSeries::new(bars, self.freq_hours)
    }

    /// First `n` bars as a new series.
    pub fn truncate(&self, n: usize) -> Result<BarSeries, MarketDataError> {
        if n == 0 || n > self.bars.len() {
            return Err(MarketDataError::TooShort {
                needed: n.max(1),
                available: self.bars.len(),
            });
        }
        BarSeries::new(self.bars[..n].to_vec(), self.freq_hours)
    }

    /// Whole-series window spec: `[first_open, last_open + freq)`.
    pub fn full_window(&self, name: &str) -> WindowSpec {
        WindowSpec {
            name: name.to_string(),
            start: self.first_ts(),
            end: self.last_ts() + chrono::Duration::hours(self.freq_hours as i64),
        }
    }
}

/// Timestamped 8-hour funding rates (decimal per 8h period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundingSeries {
    points: Vec<FundingPoint>,
    fallback_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundingPoint {
    pub ts: DateTime<Utc>,
    pub rate: f64,
}

impl FundingSeries {
    pub fn new(points: Vec<FundingPoint>, fallback_rate: f64) -> Result<Self, MarketDataError> {
        if !fallback_rate.is_finite() {
            return Err(MarketDataError::NonFiniteFallback(fallback_rate));
        }
        for pair in points.windows(2) {
            if pair[1].ts <= pair[0].ts {
                return Err(MarketDataError::NonMonotonicTimestamps(pair[1].ts));
            }
        }
        Ok(Self {
            points,
            fallback_rate,
        })
    }

    /// Empty series: every bar receives the fallback rate.
    pub fn constant_fallback(fallback_rate: f64) -> Result<Self, MarketDataError> {
        Self::new(Vec::new(), fallback_rate)
    }

    pub fn points(&self) -> &[FundingPoint] {
        &self.points
    }

    pub fn fallback_rate(&self) -> f64 {
        self.fallback_rate
    }

    /// Copy with one observation's rate replaced (test/diagnostic helper).
    pub fn with_rate_at(&self, index: usize, rate: f64) -> Result<Self, MarketDataError> {
        let mut points = self.points.clone();
        if let Some(p) = points.get_mut(index) {
            p.rate = rate;
        }
        Self::new(points, self.fallback_rate)
    }
}

/// Half-open evaluation window `[start, end)` over bar-open timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub name: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl WindowSpec {
    pub fn new(
        name: impl Into<String>,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    ) -> Result<Self, MarketDataError> {
        if start >= end {
            return Err(MarketDataError::InvalidWindow(start, end));
        }
        Ok(Self {
            name: name.into(),
            start,
            end,
        })
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}, {})", self.name, self.start, self.end)
    }
}

/// Outcome of a continuity and sanity check over a bar series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_bars: usize,
    pub n_gaps: usize,
    pub gap_locations: Vec<DateTime<Utc>>,
    pub sanity_violations: Vec<(DateTime<Utc>, String)>,
    pub fatal: bool,
}

/// Enumerates every missing grid slot and OHLCV sanity violation.
///
/// No interpolation or filling is performed; `fatal` is set when the gap
/// count exceeds `gap_tolerance` or any sanity rule is violated. Callers
/// must refuse fatal data.
pub fn validate_series(series: &BarSeries, gap_tolerance: usize) -> ValidationReport {
    let bars = series.bars();
    let step = chrono::Duration::hours(series.freq_hours() as i64);

    let mut gap_locations = Vec::new();
    let mut expected = bars[0].ts;
    for bar in bars {
        while expected < bar.ts {
            gap_locations.push(expected);
            expected += step;
        }
        expected = bar.ts + step;
    }

    let mut sanity_violations = Vec::new();
    for bar in bars {
        let vals = [bar.open, bar.high, bar.low, bar.close, bar.volume];
        if vals.iter().any(|v| !v.is_finite()) {
            sanity_violations.push((bar.ts, "non-finite field".to_string()));
            continue;
        }
        if bar.high < bar.open.max(bar.close).max(bar.low) {
            sanity_violations.push((bar.ts, "high < max(open, close, low)".to_string()));
        }
        if bar.low > bar.open.min(bar.close).min(bar.high) {
            sanity_violations.push((bar.ts, "low > min(open, close, high)".to_string()));
        }
        if bar.open <= 0.0 || bar.high <= 0.0 || bar.low <= 0.0 || bar.close <= 0.0 {
            sanity_violations.push((bar.ts, "non-positive price".to_string()));
        }
        if bar.volume < 0.0 {
            sanity_violations.push((bar.ts, "negative volume".to_string()));
        }
    }

    let n_gaps = gap_locations.len();
    ValidationReport {
        n_bars: bars.len(),
        n_gaps,
        gap_locations,
        sanity_violations: sanity_violations.clone(),
        fatal: n_gaps > gap_tolerance || !sanity_violations.is_empty(),
    }
}

/// Aggregates bars into a coarser grid aligned to UTC midnight.
///
/// Per group: open = first open, high = max high, low = min low,
/// close = last close, volume = sum. Only complete groups (exactly
/// `dst/src` bars) are emitted; incomplete leading or trailing groups are
/// dropped, never padded with synthetic bars.
pub fn resample(series: &BarSeries, dst_freq_hours: u32) -> Result<BarSeries, MarketDataError> {
    let src = series.freq_hours();
    if dst_freq_hours == 0 || !dst_freq_hours.is_multiple_of(src) {
        return Err(MarketDataError::NonMultipleFrequency {
            src,
            dst: dst_freq_hours,
        });
    }
    if dst_freq_hours == src {
        return Ok(series.clone());
    }
    let ratio = (dst_freq_hours / src) as usize;
    let dst_secs = dst_freq_hours as i64 * 3600;

    let mut out = Vec::new();
    let bars = series.bars();
    let mut i = 0;
    while i < bars.len() {
        let group_key = bars[i].ts.timestamp().div_euclid(dst_secs);
        let mut j = i;
        while j < bars.len() && bars[j].ts.timestamp().div_euclid(dst_secs) == group_key {
            j += 1;
        }
        let group = &bars[i..j];
        if group.len() == ratio {
            let group_open_ts = Utc
                .timestamp_opt(group_key * dst_secs, 0)
                .single()
                .expect("grid timestamp in range");
            out.push(Bar {
                ts: group_open_ts,
                open: group[0].open,
                high: group
                    .iter()
                    .map(|b| b.high)
                    .fold(f64::NEG_INFINITY, f64::max),
                low: group.iter().map(|b| b.low).fold(f64::INFINITY, f64::min),
                close: group[group.len() - 1].close,
                volume: group.iter().map(|b| b.volume).sum(),
            });
        }
        i = j;
    }
    if out.is_empty() {
        return Err(MarketDataError::TooShort {
            needed: ratio,
            available: bars.len(),
        });
    }
    BarSeries::new(out, dst_freq_hours)
}

/// Joins funding onto the bar grid as a carry-forward step function.
///
/// The rate at bar `t` is the most recent observation with
/// `ts <= bar-open(t)`; bars before the first observation receive the
/// fallback rate. An observation at timestamp `T` never influences a bar
/// opening before `T`.
pub fn align_funding(funding: &FundingSeries, grid: &BarSeries) -> Vec<f64> {
    let points = funding.points();
    let mut rates = Vec::with_capacity(grid.len());
    let mut idx = 0usize;
    let mut current = funding.fallback_rate();
    let mut seen_any = false;
    for bar in grid.bars() {
        while idx < points.len() && points[idx].ts <= bar.ts {
            current = points[idx].rate;
            seen_any = true;
            idx += 1;
        }
        rates.push(if seen_any {
            current
        } else {
            funding.fallback_rate()
        });
    }
    rates
}

/// Simple close-to-close arithmetic returns; length = n_bars - 1.
pub fn market_returns(series: &BarSeries) -> Result<Vec<f64>, MarketDataError> {
    let bars = series.bars();
    if bars.len() < 2 {
        return Err(MarketDataError::TooShort {
            needed: 2,
            available: bars.len(),
        });
    }
    Ok(bars
        .windows(2)
        .map(|w| w[1].close / w[0].close - 1.0)
        .collect())
}

/// Settings for the deterministic synthetic funding generator.
///
/// The generated rate drifts with the price trend of a trailing lookback
/// window, normalized by realized per-bar movement and clamped to
/// `clamp_abs_8h`. Flat prices produce a constant `base_rate_8h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFundingSettings {
    pub base_rate_8h: f64,
    pub amplitude_8h: f64,
    pub clamp_abs_8h: f64,
    pub lookback_bars: usize,
}

impl Default for SyntheticFundingSettings {
    fn default() -> Self {
        Self {
            base_rate_8h: 0.0001,
            amplitude_8h: 0.0005,
            clamp_abs_8h: 0.0075,
            lookback_bars: 42,
        }
    }
}

/// Deterministic 8-hour funding baseline derived from OHLCV.
///
/// Points are emitted on the epoch-aligned 8h grid spanning the series
/// range; identical inputs always yield identical outputs.
pub fn synthetic_funding(
    series: &BarSeries,
    settings: &SyntheticFundingSettings,
) -> Result<FundingSeries, MarketDataError> {
    const STEP_SECS: i64 = 8 * 3600;
    let bars = series.bars();
    let first = bars[0].ts.timestamp();
    let last = bars[bars.len() - 1].ts.timestamp();
    let mut t = first.div_euclid(STEP_SECS) * STEP_SECS;
    if t < first {
        t += STEP_SECS;
    }

    let mut points = Vec::new();
    let mut bar_idx = 0usize;
    while t <= last {
        while bar_idx + 1 < bars.len() && bars[bar_idx + 1].ts.timestamp() <= t {
            bar_idx += 1;
        }
        let lo = bar_idx.saturating_sub(settings.lookback_bars);
        let window = &bars[lo..=bar_idx];
        let rate = if window.len() < 2 {
            settings.base_rate_8h
        } else {
            let drift = window[window.len() - 1].close / window[0].close - 1.0;
            let mean_abs: f64 = window
                .windows(2)
                .map(|w| (w[1].close / w[0].close - 1.0).abs())
                .sum::<f64>()
                / (window.len() - 1) as f64;
            let scale = (mean_abs * (window.len() - 1) as f64).max(1e-12);
            let raw = settings.base_rate_8h + settings.amplitude_8h * (drift / scale).tanh();
            raw.clamp(-settings.clamp_abs_8h, settings.clamp_abs_8h)
        };
        points.push(FundingPoint {
            ts: Utc
                .timestamp_opt(t, 0)
                .single()
                .expect("grid timestamp in range"),
            rate,
        });
        t += STEP_SECS;
    }
    FundingSeries::new(points, settings.base_rate_8h)
}

// ---------------------------------------------------------------------------
// CSV ingestion and export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimestampForm {
    EpochMillis,
    Iso8601,
}

fn parse_timestamp(
    raw: &str,
    form: &mut Option<TimestampForm>,
    line: usize,
) -> Result<DateTime<Utc>, MarketDataError> {
    let trimmed = raw.trim();
    let looks_numeric = !trimmed.is_empty()
        && trimmed.chars().all(|c| c.is_ascii_digit() || c == '-')
        && !trimmed.contains("--")
        && trimmed.matches('-').count() <= 1
        && trimmed.find('-').is_none_or(|p| p == 0);
    let this_form = if looks_numeric {
        TimestampForm::EpochMillis
    } else {
        TimestampForm::Iso8601
    };
    match form {
        Some(f) if *f != this_form => return Err(MarketDataError::MixedTimestampForms),
        Some(_) => {}
        None => *form = Some(this_form),
    }
    match this_form {
        TimestampForm::EpochMillis => {
            let ms: i64 = trimmed.parse().map_err(|_| MarketDataError::CsvFormat {
                line,
                msg: format!("bad epoch-milliseconds timestamp `{trimmed}`"),
            })?;
            DateTime::from_timestamp_millis(ms).ok_or(MarketDataError::CsvFormat {
                line,
                msg: format!("epoch-milliseconds out of range `{trimmed}`"),
            })
        }
        TimestampForm::Iso8601 => DateTime::parse_from_rfc3339(trimmed)
            .map(|dt| dt.with_timezone(&Utc))
            .map_err(|e| MarketDataError::CsvFormat {
                line,
                msg: format!("bad ISO-8601 timestamp `{trimmed}`: {e}"),
            }),
    }
}

fn parse_field(raw: &str, name: &str, line: usize) -> Result<f64, MarketDataError> {
    raw.trim().parse().map_err(|_| MarketDataError::CsvFormat {
        line,
        msg: format!("bad {name} value `{raw}`"),
    })
}

/// Loads `timestamp,open,high,low,close,volume` rows.
///
/// Timestamps may be epoch-milliseconds or ISO-8601 UTC, but the two
/// forms cannot be mixed within one file.
pub fn load_ohlcv_csv(
    path: impl AsRef<Path>,
    freq_hours: u32,
) -> Result<BarSeries, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let expected = ["timestamp", "open", "high", "low", "close", "volume"];
    if headers.iter().map(str::trim).collect::<Vec<_>>() != expected {
        return Err(MarketDataError::CsvFormat {
            line: 1,
            msg: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut form = None;
    let mut bars = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != 6 {
            return Err(MarketDataError::CsvFormat {
                line,
                msg: format!("expected 6 fields, found {}", record.len()),
            });
        }
        bars.push(Bar {
            ts: parse_timestamp(&record[0], &mut form, line)?,
            open: parse_field(&record[1], "open", line)?,
            high: parse_field(&record[2], "high", line)?,
            low: parse_field(&record[3], "low", line)?,
            close: parse_field(&record[4], "close", line)?,
            volume: parse_field(&record[5], "volume", line)?,
        });
    }
    BarSeries::new(bars, freq_hours)
}

/// Loads `timestamp,funding_rate_8h` rows (decimal rates).
pub fn load_funding_csv(
    path: impl AsRef<Path>,
    fallback_rate: f64,
) -> Result<FundingSeries, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let expected = ["timestamp", "funding_rate_8h"];
    if headers.iter().map(str::trim).collect::<Vec<_>>() != expected {
        return Err(MarketDataError::CsvFormat {
            line: 1,
            msg: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut form = None;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != 2 {
            return Err(MarketDataError::CsvFormat {
                line,
                msg: format!("expected 2 fields, found {}", record.len()),
            });
        }
        points.push(FundingPoint {
            ts: parse_timestamp(&record[0], &mut form, line)?,
            rate: parse_field(&record[1], "funding_rate_8h", line)?,
        });
    }
    FundingSeries::new(points, fallback_rate)
}

fn fmt_ts(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Writes `timestamp,open,high,low,close,volume` with ISO-8601 timestamps.
pub fn write_ohlcv_csv(
    series: &BarSeries,
    mut writer: impl std::io::Write,
) -> Result<(), MarketDataError> {
    writeln!(writer, "timestamp,open,high,low,close,volume")?;
    for bar in series.bars() {
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            fmt_ts(bar.ts),
            bar.open,
            bar.high,
            bar.low,
            bar.close,
            bar.volume
        )?;
    }
    Ok(())
}

/// Writes `timestamp,funding_rate_8h` with ISO-8601 timestamps.
pub fn write_funding_csv(
    funding: &FundingSeries,
    mut writer: impl std::io::Write,
) -> Result<(), MarketDataError> {
    writeln!(writer, "timestamp,funding_rate_8h")?;
    for point in funding.points() {
        writeln!(writer, "{},{}", fmt_ts(point.ts), point.rate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hour(h: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(h * 3600, 0).single().unwrap()
    }

    fn flat_bar(ts: DateTime<Utc>, price: f64) -> Bar {
        Bar {
            ts,
            open: price,
            high: price,
            low: price,
            close: price,
            volume: 1.0,
        }
    }

    fn contiguous_series(n: usize, freq: u32) -> BarSeries {
        let bars = (0..n)
            .map(|i| flat_bar(hour(i as i64 * freq as i64), 100.0))
            .collect();
        BarSeries::new(bars, freq).unwrap()
    }

    #[test]
    fn validate_contiguous_is_clean() {
        let series = contiguous_series(100, 4);
        let report = validate_series(&series, 0);
        assert_eq!(report.n_bars, 100);
        assert_eq!(report.n_gaps, 0);
        assert!(report.sanity_violations.is_empty());
        assert!(!report.fatal);
    }

    #[test]
    fn validate_one_missing_bar_is_fatal() {
        let mut bars: Vec<Bar> = (0..10).map(|i| flat_bar(hour(i * 4), 100.0)).collect();
        bars.remove(5);
        let series = BarSeries::new(bars, 4).unwrap();
        let report = validate_series(&series, 0);
        assert_eq!(report.n_gaps, 1);
        assert_eq!(report.gap_locations, vec![hour(20)]);
        assert!(report.fatal);
        assert!(!validate_series(&series, 1).fatal);
    }

    #[test]
    fn validate_flags_high_below_close() {
        let mut bars: Vec<Bar> = (0..5).map(|i| flat_bar(hour(i * 4), 100.0)).collect();
        // high < close, everything else consistent
        bars[2] = Bar {
            ts: hour(8),
            open: 99.0,
            high: 99.5,
            low: 98.8,
            close: 100.0,
            volume: 1.0,
        };
        let series = BarSeries::new(bars, 4).unwrap();
        let report = validate_series(&series, 0);
        assert_eq!(report.sanity_violations.len(), 1);
        assert_eq!(report.sanity_violations[0].0, hour(8));
        assert!(report.fatal);
    }

    #[test]
    fn validate_is_idempotent() {
        let series = contiguous_series(20, 4);
        assert_eq!(validate_series(&series, 0), validate_series(&series, 0));
    }

    #[test]
    fn resample_hand_aggregation() {
        let opens = [10.0, 11.0, 12.0, 13.0];
        let highs = [12.0, 14.0, 13.0, 13.0];
        let lows = [9.0, 10.0, 11.0, 12.0];
        let closes = [11.0, 12.0, 12.0, 13.0];
        let vols = [1.0, 2.0, 3.0, 4.0];
        let bars: Vec<Bar> = (0..4)
            .map(|i| Bar {
                ts: hour(i as i64),
                open: opens[i],
                high: highs[i],
                low: lows[i],
                close: closes[i],
                volume: vols[i],
            })
            .collect();
        let series = BarSeries::new(bars, 1).unwrap();
        let out = resample(&series, 4).unwrap();
        assert_eq!(out.len(), 1);
        let bar = out.bars()[0];
        assert_eq!(bar.ts, hour(0));
        assert_eq!(
            (bar.open, bar.high, bar.low, bar.close, bar.volume),
            (10.0, 14.0, 9.0, 13.0, 10.0)
        );
    }

    #[test]
    fn resample_identity_when_same_freq() {
        let series = contiguous_series(8, 4);
        assert_eq!(resample(&series, 4).unwrap(), series);
    }

    #[test]
    fn resample_drops_trailing_singleton() {
        let series = contiguous_series(5, 1);
        let out = resample(&series, 4).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn resample_rejects_non_multiple() {
        let series = contiguous_series(8, 4);
        assert!(matches!(
            resample(&series, 6),
            Err(MarketDataError::NonMultipleFrequency { src: 4, dst: 6 })
        ));
    }

    #[test]
    fn align_carry_forward_walk() {
        let grid = BarSeries::new(
            vec![
                flat_bar(hour(4), 100.0),
                flat_bar(hour(8), 100.0),
                flat_bar(hour(12), 100.0),
            ],
            4,
        )
        .unwrap();
        let funding = FundingSeries::new(
            vec![FundingPoint {
                ts: hour(8),
                rate: 0.0003,
            }],
            0.0001,
        )
        .unwrap();
        assert_eq!(align_funding(&funding, &grid), vec![0.0001, 0.0003, 0.0003]);
    }

    #[test]
    fn align_empty_funding_uses_fallback() {
        let grid = contiguous_series(5, 4);
        let funding = FundingSeries::constant_fallback(0.0001).unwrap();
        assert_eq!(align_funding(&funding, &grid), vec![0.0001; 5]);
    }

    #[test]
    fn align_constant_between_points() {
        let grid = contiguous_series(10, 4);
        let funding = FundingSeries::new(
            vec![
                FundingPoint {
                    ts: hour(4),
                    rate: 0.0002,
                },
                FundingPoint {
                    ts: hour(24),
                    rate: 0.0005,
                },
            ],
            0.0001,
        )
        .unwrap();
        let rates = align_funding(&funding, &grid);
        assert_eq!(rates[0], 0.0001);
        assert!(rates[1..6].iter().all(|&r| r == 0.0002));
        assert!(rates[6..].iter().all(|&r| r == 0.0005));
    }

    #[test]
    fn returns_constant_closes_are_zero() {
        let series = contiguous_series(10, 4);
        assert!(market_returns(&series).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn returns_up_and_down_moves() {
        let bars = vec![
            flat_bar(hour(0), 100.0),
            flat_bar(hour(4), 110.0),
            flat_bar(hour(8), 88.0),
        ];
        let series = BarSeries::new(bars, 4).unwrap();
        let rets = market_returns(&series).unwrap();
        assert!((rets[0] - 0.10).abs() < 1e-12);
        assert!((rets[1] - (-0.20)).abs() < 1e-12);
    }

    #[test]
    fn synthetic_funding_constant_price_gives_base_rate() {
        let series = contiguous_series(60, 4);
        let settings = SyntheticFundingSettings::default();
        let funding = synthetic_funding(&series, &settings).unwrap();
        assert!(!funding.points().is_empty());
        assert!(funding
            .points()
            .iter()
            .all(|p| p.rate == settings.base_rate_8h));
        assert_eq!(funding.fallback_rate(), settings.base_rate_8h);
    }

    #[test]
    fn synthetic_funding_is_deterministic() {
        let bars: Vec<Bar> = (0..80)
            .map(|i| {
                let price = 100.0 * (1.0 + 0.002 * i as f64);
                Bar {
                    ts: hour(i * 4),
                    open: price,
                    high: price * 1.001,
                    low: price * 0.999,
                    close: price,
                    volume: 5.0,
                }
            })
            .collect();
        let series = BarSeries::new(bars, 4).unwrap();
        let settings = SyntheticFundingSettings::default();
        let a = synthetic_funding(&series, &settings).unwrap();
        let b = synthetic_funding(&series, &settings).unwrap();
        assert_eq!(a, b);
        assert!(a
            .points()
            .iter()
            .all(|p| p.rate.abs() <= settings.clamp_abs_8h));
    }

    #[test]
    fn window_slicing_is_half_open() {
        let series = contiguous_series(10, 4);
        let window = WindowSpec::new("w", hour(8), hour(24)).unwrap();
        let sliced = series.slice_window(&window).unwrap();
        assert_eq!(sliced.len(), 4);
        assert_eq!(sliced.first_ts(), hour(8));
        assert_eq!(sliced.last_ts(), hour(20));
    }

    #[test]
    fn csv_roundtrip_and_mixed_forms_rejected() {
        let dir = std::env::temp_dir().join("perpbt_md_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bars.csv");
        let series = contiguous_series(6, 4);
        let mut buf = Vec::new();
        write_ohlcv_csv(&series, &mut buf).unwrap();
        std::fs::write(&path, &buf).unwrap();
        let loaded = load_ohlcv_csv(&path, 4).unwrap();
        assert_eq!(loaded, series);

        let mixed = "timestamp,open,high,low,close,volume\n\
                     0,1,1,1,1,1\n\
                     1970-01-01T04:00:00Z,1,1,1,1,1\n";
        std::fs::write(&path, mixed).unwrap();
        assert!(matches!(
            load_ohlcv_csv(&path, 4),
            Err(MarketDataError::MixedTimestampForms)
        ));
    }
}
