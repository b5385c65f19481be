//! Backtest execution and ledger accounting under strict t+1 semantics.
//!
//! A signal computed at the close of bar `t-1` maps to the exposure held
//! during bar `t`; intra-bar execution does not exist. Every bar emits a
//! ledger row satisfying the accounting identity
//! `r_net = r_raw - c_fee - c_slip - c_fund` with exact arithmetic, and
//! identical inputs always produce bit-identical ledgers. A deliberately
//! naive same-bar (t+0) mode exists for semantics diagnostics only.

use crate::costs::{bar_costs, CostError, CostProfile};
use crate::marketdata::{
    align_funding, validate_series, BarSeries, FundingSeries, MarketDataError, WindowSpec,
};
use crate::screening;
use crate::seeds::digest_json;
use crate::signal::{generate_signals, SignalError, StrategyParams};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Bars per year at the 4-hour frequency (6 per day x 365 days).
pub const ANNUALIZATION_FACTOR: f64 = 2190.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Market(#[from] MarketDataError),

    #[error(transparent)]
    Signal(#[from] SignalError),

    #[error(transparent)]
    Cost(#[from] CostError),

    #[error("window [{start}, {end}) extends outside the data range [{data_start}, {data_end}]")]
    WindowOutsideData {
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        data_start: DateTime<Utc>,
        data_end: DateTime<Utc>,
    },

    #[error("fatal data validation: {n_gaps} gaps, {n_violations} sanity violations")]
    FatalData { n_gaps: usize, n_violations: usize },

    #[error("signal sequence length {signals} does not match window bar count {bars}")]
    SignalsLengthMismatch { signals: usize, bars: usize },

    #[error("equity ruined at ledger row {bar_index} (per-bar net return <= -1)")]
    RuinedEquity { bar_index: usize },

    #[error("ledger is empty")]
    EmptyLedger,

    #[error("total return {0} out of domain (must be > -1)")]
    TotalReturnOutOfDomain(f64),

    #[error("n_bars must be >= 1")]
    ZeroBars,

    #[error("ledger csv format error at line {line}: {msg}")]
    LedgerCsvFormat { line: usize, msg: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which bar a close-time signal takes effect on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionSemantics {
    /// Signal at close of bar t-1 drives exposure during bar t.
    StrictT1,
    /// Diagnostic only: signal at close of bar t drives exposure during
    /// the same bar t.
    NaiveT0,
}

impl std::fmt::Display for ExecutionSemantics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::StrictT1 => write!(f, "strict_t1"),
            Self::NaiveT0 => write!(f, "naive_t0"),
        }
    }
}

/// One bar of the audit ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub ts: DateTime<Utc>,
    pub signal: i8,
    pub exposure: f64,
    pub r_mkt: f64,
    pub r_raw: f64,
    pub c_fee: f64,
    pub c_slip: f64,
    pub c_fund: f64,
    pub r_net: f64,
}

/// A completed backtest: the ledger plus provenance digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub rows: Vec<LedgerRow>,
    pub window: WindowSpec,
    pub params_digest: String,
    pub profile_digest: String,
    pub semantics: ExecutionSemantics,
}

/// Headline performance statistics of a net-return ledger.
///
/// `trades` and `switch_density` are absent for benchmarks (buy-and-hold)
/// where trade counting is not meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub ann_return: f64,
    pub sharpe: f64,
    pub max_dd: f64,
    pub monthly_geom: f64,
    pub trades: Option<usize>,
    pub switch_density: Option<f64>,
}

/// Exposure magnitude: the most restrictive of the leverage cap, the
/// notional cap (in equity multiples) and, when enabled, the account
/// exposure cap.
pub fn exposure_cap(profile: &CostProfile, params: &StrategyParams) -> f64 {
    let mut cap = profile
        .max_leverage
        .min(profile.notional_cap / profile.initial_equity);
    if params.max_exposure_abs > 0.0 {
        cap = cap.min(params.max_exposure_abs);
    }
    cap
}

fn check_window_containment(series: &BarSeries, window: &WindowSpec) -> Result<(), EngineError> {
    let data_start = series.first_ts();
    let data_end = series.last_ts() + chrono::Duration::hours(series.freq_hours() as i64);
    if window.start < data_start || window.end > data_end {
        return Err(EngineError::WindowOutsideData {
            start: window.start,
            end: window.end,
            data_start,
            data_end,
        });
    }
    Ok(())
}

fn build_ledger(
    sliced: &BarSeries,
    signals: &[i8],
    aligned_fr: &[f64],
    cap: f64,
    profile: &CostProfile,
    semantics: ExecutionSemantics,
) -> Vec<LedgerRow> {
    let bars = sliced.bars();
    let bar_hours = sliced.freq_hours() as f64;
    let mut rows = Vec::with_capacity(bars.len());
    let mut pos_prev = 0.0f64;
    for (t, bar) in bars.iter().enumerate() {
        let driving_signal = match (semantics, t) {
            (_, 0) => 0,
            (ExecutionSemantics::StrictT1, _) => signals[t - 1],
            (ExecutionSemantics::NaiveT0, _) => signals[t],
        };
        let exposure = driving_signal as f64 * cap;
        let r_mkt = if t == 0 {
            0.0
        } else {
            bar.close / bars[t - 1].close - 1.0
        };
        let costs = bar_costs(pos_prev, exposure, aligned_fr[t], bar_hours, profile);
        let r_raw = exposure * r_mkt;
        let r_net = r_raw - costs.fee - costs.slip - costs.funding;
        rows.push(LedgerRow {
            ts: bar.ts,
            signal: signals[t],
            exposure,
            r_mkt,
            r_raw,
            c_fee: costs.fee,
            c_slip: costs.slip,
            c_fund: costs.funding,
            r_net,
        });
        pos_prev = exposure;
    }
    rows
}

/// Runs the full signal + execution + cost pipeline over a window.
///
/// The window must lie inside the data range, and the windowed slice must
/// pass validation with zero gap tolerance; fatal data aborts the run.
/// Warm-up happens inside the window, so the ledger timestamps match the
/// window bars exactly.
pub fn run_backtest(
    series: &BarSeries,
    funding: &FundingSeries,
    params: &StrategyParams,
    profile: &CostProfile,
    window: &WindowSpec,
    semantics: ExecutionSemantics,
) -> Result<BacktestResult, EngineError> {
    params.validate()?;
    profile.validate()?;
    check_window_containment(series, window)?;
    let sliced = series.slice_window(window)?;
    let report = validate_series(&sliced, 0);
    if report.fatal {
        return Err(EngineError::FatalData {
            n_gaps: report.n_gaps,
            n_violations: report.sanity_violations.len(),
        });
    }
    let aligned = align_funding(funding, &sliced);
    let signals = generate_signals(&sliced, &aligned, params)?;
    let cap = exposure_cap(profile, params);
    let rows = build_ledger(&sliced, &signals, &aligned, cap, profile, semantics);
    Ok(BacktestResult {
        rows,
        window: window.clone(),
        params_digest: digest_json(params),
        profile_digest: digest_json(profile),
        semantics,
    })
}

/// Runs the execution + cost pipeline over a window with an externally
/// supplied signal sequence (one entry per window bar).
///
/// Used by semantics diagnostics and replay tests where the decision path
/// is crafted rather than generated.
pub fn run_backtest_with_signals(
    series: &BarSeries,
    funding: &FundingSeries,
    signals: &[i8],
    profile: &CostProfile,
    window: &WindowSpec,
    semantics: ExecutionSemantics,
) -> Result<BacktestResult, EngineError> {
    profile.validate()?;
    check_window_containment(series, window)?;
    let sliced = series.slice_window(window)?;
    if signals.len() != sliced.len() {
        return Err(EngineError::SignalsLengthMismatch {
            signals: signals.len(),
            bars: sliced.len(),
        });
    }
    let report = validate_series(&sliced, 0);
    if report.fatal {
        return Err(EngineError::FatalData {
            n_gaps: report.n_gaps,
            n_violations: report.sanity_violations.len(),
        });
    }
    let aligned = align_funding(funding, &sliced);
    let cap = profile
        .max_leverage
        .min(profile.notional_cap / profile.initial_equity);
    let rows = build_ledger(&sliced, signals, &aligned, cap, profile, semantics);
    Ok(BacktestResult {
        rows,
        window: window.clone(),
        params_digest: digest_json(&signals.to_vec()),
        profile_digest: digest_json(profile),
        semantics,
    })
}

/// Geometric annualization: `(1 + R_tot)^(AF / n_bars) - 1` with AF = 2190.
pub fn annualize(r_tot: f64, n_bars: usize) -> Result<f64, EngineError> {
    if n_bars == 0 {
        return Err(EngineError::ZeroBars);
    }
    if r_tot <= -1.0 || !r_tot.is_finite() {
        return Err(EngineError::TotalReturnOutOfDomain(r_tot));
    }
    Ok((1.0 + r_tot).powf(ANNUALIZATION_FACTOR / n_bars as f64) - 1.0)
}

/// Performance metrics of a backtest ledger.
///
/// Sharpe uses a simple per-bar risk-free conversion (`rf_annual / 2190`)
/// with the sample standard deviation, and is defined as 0 for a
/// zero-variance ledger. Max drawdown is the peak-to-trough fraction of
/// the compounded equity curve starting from 1.
pub fn metrics(result: &BacktestResult, rf_annual: f64) -> Result<MetricsSummary, EngineError> {
    let summary = ledger_metrics(&result.rows, rf_annual)?;
    Ok(summary)
}

fn ledger_metrics(rows: &[LedgerRow], rf_annual: f64) -> Result<MetricsSummary, EngineError> {
    if rows.is_empty() {
        return Err(EngineError::EmptyLedger);
    }
    let n = rows.len();
    let mut equity = 1.0f64;
    let mut peak = 1.0f64;
    let mut max_dd = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        if row.r_net <= -1.0 {
            return Err(EngineError::RuinedEquity { bar_index: i });
        }
        equity *= 1.0 + row.r_net;
        peak = peak.max(equity);
        max_dd = max_dd.max(1.0 - equity / peak);
    }
    let r_tot = equity - 1.0;
    let ann_return = annualize(r_tot, n)?;

    let mean = rows.iter().map(|r| r.r_net).sum::<f64>() / n as f64;
    let sharpe = if n < 2 {
        0.0
    } else {
        let var = rows
            .iter()
            .map(|r| (r.r_net - mean) * (r.r_net - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        let std = var.sqrt();
        if std == 0.0 {
            0.0
        } else {
            (mean - rf_annual / ANNUALIZATION_FACTOR) / std * ANNUALIZATION_FACTOR.sqrt()
        }
    };

    let monthly: Vec<(DateTime<Utc>, f64)> = rows.iter().map(|r| (r.ts, r.r_net)).collect();
    let monthly_geom = screening::monthly_geom(&monthly);

    let mut trades = 0usize;
    let mut pos_prev = 0.0f64;
    for row in rows {
        if row.exposure != pos_prev {
            trades += 1;
        }
        pos_prev = row.exposure;
    }

    Ok(MetricsSummary {
        ann_return,
        sharpe,
        max_dd,
        monthly_geom,
        trades: Some(trades),
        switch_density: Some(trades as f64 / n as f64),
    })
}

/// Passive long benchmark over the window: unit exposure from the second
/// bar onward, zero costs, trade statistics reported as absent.
pub fn buy_and_hold(
    series: &BarSeries,
    window: &WindowSpec,
    rf_annual: f64,
) -> Result<MetricsSummary, EngineError> {
    check_window_containment(series, window)?;
    let sliced = series.slice_window(window)?;
    let bars = sliced.bars();
    let rows: Vec<LedgerRow> = bars
        .iter()
        .enumerate()
        .map(|(t, bar)| {
            let exposure = if t == 0 { 0.0 } else { 1.0 };
            let r_mkt = if t == 0 {
                0.0
            } else {
                bar.close / bars[t - 1].close - 1.0
            };
            let r_raw = exposure * r_mkt;
            LedgerRow {
                ts: bar.ts,
                signal: 1,
                exposure,
                r_mkt,
                r_raw,
                c_fee: 0.0,
                c_slip: 0.0,
                c_fund: 0.0,
                r_net: r_raw,
            }
        })
        .collect();
    let mut summary = ledger_metrics(&rows, rf_annual)?;
    summary.trades = None;
    summary.switch_density = None;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Ledger CSV export / import
// ---------------------------------------------------------------------------

pub const LEDGER_CSV_HEADER: &str =
    "timestamp,signal,exposure,r_mkt,r_raw,c_fee,c_slip,c_fund,r_net";

/// Writes the ledger with an optional `# run_id=...` provenance line.
///
/// Floats use the shortest round-trippable representation, so a written
/// ledger reads back bit-identically.
pub fn write_ledger_csv(
    rows: &[LedgerRow],
    run_id: Option<&str>,
    mut writer: impl std::io::Write,
) -> Result<(), EngineError> {
    if let Some(id) = run_id {
        writeln!(writer, "# run_id={id}")?;
    }
    writeln!(writer, "{LEDGER_CSV_HEADER}")?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{},{}",
            row.ts.format("%Y-%m-%dT%H:%M:%SZ"),
            row.signal,
            row.exposure,
            row.r_mkt,
            row.r_raw,
            row.c_fee,
            row.c_slip,
            row.c_fund,
            row.r_net
        )?;
    }
    Ok(())
}

/// Reads a ledger written by [`write_ledger_csv`] ( `#` lines skipped).
pub fn read_ledger_csv(path: impl AsRef<Path>) -> Result<Vec<LedgerRow>, EngineError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let expected: Vec<&str> = LEDGER_CSV_HEADER.split(',').collect();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != expected {
        return Err(EngineError::LedgerCsvFormat {
            line: 1,
            msg: format!("expected header `{LEDGER_CSV_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != 9 {
            return Err(EngineError::LedgerCsvFormat {
                line,
                msg: format!("expected 9 fields, found {}", record.len()),
            });
        }
        let ts = DateTime::parse_from_rfc3339(record[0].trim())
            .map(|dt| dt.with_timezone(&Utc))
            .map_err(|e| EngineError::LedgerCsvFormat {
                line,
                msg: format!("bad timestamp `{}`: {e}", &record[0]),
            })?;
        let parse = |idx: usize, name: &str| -> Result<f64, EngineError> {
            record[idx]
                .trim()
                .parse()
                .map_err(|_| EngineError::LedgerCsvFormat {
                    line,
                    msg: format!("bad {name} value `{}`", &record[idx]),
                })
        };
        let signal: i8 = record[1]
            .trim()
            .parse()
            .map_err(|_| EngineError::LedgerCsvFormat {
                line,
                msg: format!("bad signal value `{}`", &record[1]),
            })?;
        rows.push(LedgerRow {
            ts,
            signal,
            exposure: parse(2, "exposure")?,
            r_mkt: parse(3, "r_mkt")?,
            r_raw: parse(4, "r_raw")?,
            c_fee: parse(5, "c_fee")?,
            c_slip: parse(6, "c_slip")?,
            c_fund: parse(7, "c_fund")?,
            r_net: parse(8, "r_net")?,
        });
    }
    Ok(rows)
}
