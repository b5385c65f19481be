//! Full-chain reconciliation between a reference ledger and an
//! independent engine replay, plus the ok/watch/kill guard overlay.
//!
//! The engine is deterministic, so replaying a run from its config must
//! reproduce the reference ledger exactly; any nonzero diff indicates a
//! data, config or implementation divergence. The guard consumes ledger
//! streams (offline or paper-trading replays) and issues decisions from
//! rolling performance metrics; a persistent kill latches until an
//! explicit manual resume.

use crate::costs::CostProfile;
use crate::engine::{
    run_backtest, EngineError, ExecutionSemantics, LedgerRow, ANNUALIZATION_FACTOR,
};
use crate::marketdata::{BarSeries, FundingSeries, WindowSpec};
use crate::signal::StrategyParams;
use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Rolling horizons in bars (30d / 90d of 4-hour bars).
pub const BARS_30D: usize = 180;
pub const BARS_90D: usize = 540;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("reference ledger length {reference} does not match replay length {replay}")]
    LengthMismatch { reference: usize, replay: usize },

    #[error("reference ledger timestamp {reference} does not match replay timestamp {replay} at row {row}")]
    TimestampMismatch {
        row: usize,
        reference: DateTime<Utc>,
        replay: DateTime<Utc>,
    },

    #[error("reference ledger is empty")]
    EmptyReference,

    #[error("guard rows out of order at {0}")]
    OutOfOrderRows(DateTime<Utc>),

    #[error("kill threshold `{rule}` less severe than watch threshold")]
    KillLessSevere { rule: &'static str },

    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Inputs required to re-execute a run for reconciliation.
#[derive(Debug, Clone)]
pub struct ReplayInputs<'a> {
    pub series: &'a BarSeries,
    pub funding: &'a FundingSeries,
    pub params: &'a StrategyParams,
    pub profile: &'a CostProfile,
    pub window: &'a WindowSpec,
    pub semantics: ExecutionSemantics,
}

/// Reconciliation result; all diffs are reference-minus-replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_bars: usize,
    pub max_abs_signal_diff: f64,
    pub max_abs_exposure_diff: f64,
    pub trades_diff: f64,
    pub fees_diff: f64,
    pub slip_diff: f64,
    pub fund_diff: f64,
    pub pass: bool,
    pub tolerance: f64,
}

fn count_trades(rows: &[LedgerRow]) -> usize {
    let mut trades = 0usize;
    let mut prev = 0.0f64;
    for row in rows {
        if row.exposure != prev {
            trades += 1;
        }
        prev = row.exposure;
    }
    trades
}

/// Re-executes the engine from config and diffs per-bar signal/exposure
/// (max abs) and cumulative trades/fees/slippage/funding against the
/// reference. Passes when every diff is within the tolerance.
pub fn replay_and_audit(
    inputs: &ReplayInputs<'_>,
    reference: &[LedgerRow],
    tolerance: f64,
) -> Result<AuditReport, AuditError> {
    if reference.is_empty() {
        return Err(AuditError::EmptyReference);
    }
    let replay = run_backtest(
        inputs.series,
        inputs.funding,
        inputs.params,
        inputs.profile,
        inputs.window,
        inputs.semantics,
    )?;
    if replay.rows.len() != reference.len() {
        return Err(AuditError::LengthMismatch {
            reference: reference.len(),
            replay: replay.rows.len(),
        });
    }
    let mut max_abs_signal_diff = 0.0f64;
    let mut max_abs_exposure_diff = 0.0f64;
    for (row, (reference_row, replay_row)) in reference.iter().zip(&replay.rows).enumerate() {
        if reference_row.ts != replay_row.ts {
            return Err(AuditError::TimestampMismatch {
                row,
                reference: reference_row.ts,
                replay: replay_row.ts,
            });
        }
        max_abs_signal_diff =
            max_abs_signal_diff.max((reference_row.signal as f64 - replay_row.signal as f64).abs());
        max_abs_exposure_diff =
            max_abs_exposure_diff.max((reference_row.exposure - replay_row.exposure).abs());
    }
    let sum =
        |rows: &[LedgerRow], field: fn(&LedgerRow) -> f64| -> f64 { rows.iter().map(field).sum() };
    let trades_diff = count_trades(reference) as f64 - count_trades(&replay.rows) as f64;
    let fees_diff = sum(reference, |r| r.c_fee) - sum(&replay.rows, |r| r.c_fee);
    let slip_diff = sum(reference, |r| r.c_slip) - sum(&replay.rows, |r| r.c_slip);
    let fund_diff = sum(reference, |r| r.c_fund) - sum(&replay.rows, |r| r.c_fund);
    let pass = max_abs_signal_diff <= tolerance
        && max_abs_exposure_diff <= tolerance
        && trades_diff.abs() <= tolerance
        && fees_diff.abs() <= tolerance
        && slip_diff.abs() <= tolerance
        && fund_diff.abs() <= tolerance;
    Ok(AuditReport {
        n_bars: reference.len(),
        max_abs_signal_diff,
        max_abs_exposure_diff,
        trades_diff,
        fees_diff,
        slip_diff,
        fund_diff,
        pass,
        tolerance,
    })
}

// ---------------------------------------------------------------------------
// Guard state machine
// ---------------------------------------------------------------------------

/// Thresholds of one rule set; `None` disables a rule.
///
/// Return floors fire when the rolling annualized return drops below the
/// floor; the remaining rules fire when their metric exceeds the ceiling.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GuardRules {
    pub min_ann_return_30d: Option<f64>,
    pub min_ann_return_90d: Option<f64>,
    pub max_drawdown: Option<f64>,
    pub max_daily_loss: Option<f64>,
    pub max_trade_frequency: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KillMode {
    Temporary,
    Persistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardConfig {
    pub watch: GuardRules,
    pub kill: GuardRules,
    pub kill_mode: KillMode,
}

impl GuardConfig {
    /// Kill thresholds must be at least as severe as watch thresholds
    /// wherever both are set.
    pub fn validate(&self) -> Result<(), AuditError> {
        fn floor_ok(watch: Option<f64>, kill: Option<f64>) -> bool {
            match (watch, kill) {
                (Some(w), Some(k)) => k <= w,
                _ => true,
            }
        }
        fn ceil_ok(watch: Option<f64>, kill: Option<f64>) -> bool {
            match (watch, kill) {
                (Some(w), Some(k)) => k >= w,
                _ => true,
            }
        }
        let checks: [(&'static str, bool); 5] = [
            (
                "min_ann_return_30d",
                floor_ok(self.watch.min_ann_return_30d, self.kill.min_ann_return_30d),
            ),
            (
                "min_ann_return_90d",
                floor_ok(self.watch.min_ann_return_90d, self.kill.min_ann_return_90d),
            ),
            (
                "max_drawdown",
                ceil_ok(self.watch.max_drawdown, self.kill.max_drawdown),
            ),
            (
                "max_daily_loss",
                ceil_ok(self.watch.max_daily_loss, self.kill.max_daily_loss),
            ),
            (
                "max_trade_frequency",
                ceil_ok(
                    self.watch.max_trade_frequency,
                    self.kill.max_trade_frequency,
                ),
            ),
        ];
        for (rule, ok) in checks {
            if !ok {
                return Err(AuditError::KillLessSevere { rule });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardDecision {
    Ok,
    Watch,
    Kill,
}

impl std::fmt::Display for GuardDecision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Ok => write!(f, "ok"),
            Self::Watch => write!(f, "watch"),
            Self::Kill => write!(f, "kill"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct GuardBufferRow {
    r_net: f64,
    exposure: f64,
}

/// Rolling buffers plus the latch; single-owner, advanced by one
/// sequential ledger stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardState {
    pub decision: GuardDecision,
    pub disabled: bool,
    pub last_transition: Option<DateTime<Utc>>,
    buffer: VecDeque<GuardBufferRow>,
    last_ts: Option<DateTime<Utc>>,
    day_key: Option<(i32, u32, u32)>,
    day_compound: f64,
}

impl Default for GuardState {
    fn default() -> Self {
        Self::new()
    }
}

impl GuardState {
    pub fn new() -> Self {
        Self {
            decision: GuardDecision::Ok,
            disabled: false,
            last_transition: None,
            buffer: VecDeque::with_capacity(BARS_90D),
            last_ts: None,
            day_key: None,
            day_compound: 1.0,
        }
    }

    /// Clears a persistent kill; the next step re-evaluates the rules.
    pub fn resume(mut self) -> Self {
        self.disabled = false;
        self.decision = GuardDecision::Ok;
        self
    }
}

/// One decision-log entry; `flatten` means target exposure is forced to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardStepLog {
    pub ts: DateTime<Utc>,
    pub decision: GuardDecision,
    pub triggered_rules: Vec<String>,
    pub flatten: bool,
}

fn rolling_ann_return(buffer: &VecDeque<GuardBufferRow>, horizon: usize) -> Option<f64> {
    if buffer.len() < horizon {
        return None;
    }
    let total: f64 = buffer
        .iter()
        .skip(buffer.len() - horizon)
        .map(|r| 1.0 + r.r_net)
        .product();
    if total <= 0.0 {
        return Some(-1.0);
    }
    Some(total.powf(ANNUALIZATION_FACTOR / horizon as f64) - 1.0)
}

fn rolling_drawdown(buffer: &VecDeque<GuardBufferRow>) -> f64 {
    let mut equity = 1.0f64;
    let mut peak = 1.0f64;
    let mut dd = 0.0f64;
    for row in buffer {
        equity *= 1.0 + row.r_net;
        if equity < 0.0 {
            equity = 0.0;
        }
        peak = peak.max(equity);
        if peak > 0.0 {
            dd = 1.0 - equity / peak;
        }
    }
    dd.clamp(0.0, 1.0)
}

fn rolling_trade_frequency(buffer: &VecDeque<GuardBufferRow>, horizon: usize) -> Option<f64> {
    if buffer.len() < 2 {
        return None;
    }
    let window = buffer.len().min(horizon);
    let rows: Vec<&GuardBufferRow> = buffer.iter().skip(buffer.len() - window).collect();
    let mut trades = 0usize;
    for pair in rows.windows(2) {
        if pair[1].exposure != pair[0].exposure {
            trades += 1;
        }
    }
    Some(trades as f64 / window as f64)
}

fn fired_rules(rules: &GuardRules, state: &GuardState, prefix: &str) -> Vec<String> {
    let mut fired = Vec::new();
    if let (Some(floor), Some(ann)) = (
        rules.min_ann_return_30d,
        rolling_ann_return(&state.buffer, BARS_30D),
    ) {
        if ann < floor {
            fired.push(format!("{prefix}:ann_return_30d"));
        }
    }
    if let (Some(floor), Some(ann)) = (
        rules.min_ann_return_90d,
        rolling_ann_return(&state.buffer, BARS_90D),
    ) {
        if ann < floor {
            fired.push(format!("{prefix}:ann_return_90d"));
        }
    }
    if let Some(ceiling) = rules.max_drawdown {
        if rolling_drawdown(&state.buffer) > ceiling {
            fired.push(format!("{prefix}:drawdown"));
        }
    }
    if let Some(ceiling) = rules.max_daily_loss {
        if state.day_compound - 1.0 < -ceiling {
            fired.push(format!("{prefix}:daily_loss"));
        }
    }
    if let (Some(ceiling), Some(freq)) = (
        rules.max_trade_frequency,
        rolling_trade_frequency(&state.buffer, BARS_30D),
    ) {
        if freq > ceiling {
            fired.push(format!("{prefix}:trade_frequency"));
        }
    }
    fired
}

/// Advances the guard over new time-ordered ledger rows.
///
/// Returns the updated state and one log entry per row. A kill decision
/// flattens target exposure on the same step; in persistent mode it
/// latches until [`GuardState::resume`].
pub fn guard_step(
    mut state: GuardState,
    rows: &[LedgerRow],
    config: &GuardConfig,
) -> Result<(GuardState, Vec<GuardStepLog>), AuditError> {
    config.validate()?;
    let mut logs = Vec::with_capacity(rows.len());
    for row in rows {
        if let Some(last) = state.last_ts {
            if row.ts <= last {
                return Err(AuditError::OutOfOrderRows(row.ts));
            }
        }
        state.last_ts = Some(row.ts);

        let key = (row.ts.year(), row.ts.month(), row.ts.day());
        if state.day_key != Some(key) {
            state.day_key = Some(key);
            state.day_compound = 1.0;
        }
        state.day_compound *= 1.0 + row.r_net;

        state.buffer.push_back(GuardBufferRow {
            r_net: row.r_net,
            exposure: row.exposure,
        });
        while state.buffer.len() > BARS_90D {
            state.buffer.pop_front();
        }

        let kill_fired = fired_rules(&config.kill, &state, "kill");
        let watch_fired = fired_rules(&config.watch, &state, "watch");

        let decision = if state.disabled || !kill_fired.is_empty() {
            if !state.disabled && config.kill_mode == KillMode::Persistent {
                state.disabled = true;
            }
            GuardDecision::Kill
        } else if !watch_fired.is_empty() {
            GuardDecision::Watch
        } else {
            GuardDecision::Ok
        };
        if decision != state.decision {
            state.last_transition = Some(row.ts);
            state.decision = decision;
        }

        let mut triggered = kill_fired;
        triggered.extend(watch_fired);
        logs.push(GuardStepLog {
            ts: row.ts,
            decision,
            triggered_rules: triggered,
            flatten: decision == GuardDecision::Kill,
        });
    }
    Ok((state, logs))
}

/// Writes `timestamp,decision,triggered_rules` (rules joined with `;`).
pub fn write_guard_log_csv(
    logs: &[GuardStepLog],
    run_id: Option<&str>,
    mut writer: impl std::io::Write,
) -> std::io::Result<()> {
    if let Some(id) = run_id {
        writeln!(writer, "# run_id={id}")?;
    }
    writeln!(writer, "timestamp,decision,triggered_rules")?;
    for log in logs {
        writeln!(
            writer,
            "{},{},{}",
            log.ts.format("%Y-%m-%dT%H:%M:%SZ"),
            log.decision,
            log.triggered_rules.join(";")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_series, SynthSeriesConfig};
    use chrono::TimeZone;

    fn replay_setup() -> (
        BarSeries,
        FundingSeries,
        StrategyParams,
        CostProfile,
        WindowSpec,
    ) {
        let series = gen_series(&SynthSeriesConfig {
            seed: 123,
            n_bars: 400,
            ..SynthSeriesConfig::default()
        });
        let funding = FundingSeries::constant_fallback(0.0001).unwrap();
        let params = StrategyParams {
            ema_threshold: 0.0005,
            ..StrategyParams::default()
        };
        let profile = CostProfile::default();
        let window = series.full_window("w");
        (series, funding, params, profile, window)
    }

    #[test]
    fn same_engine_replay_is_all_zero() {
        let (series, funding, params, profile, window) = replay_setup();
        let reference = run_backtest(
            &series,
            &funding,
            &params,
            &profile,
            &window,
            ExecutionSemantics::StrictT1,
        )
        .unwrap();
        let inputs = ReplayInputs {
            series: &series,
            funding: &funding,
            params: &params,
            profile: &profile,
            window: &window,
            semantics: ExecutionSemantics::StrictT1,
        };
        let report = replay_and_audit(&inputs, &reference.rows, 0.0).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_abs_signal_diff, 0.0);
        assert_eq!(report.max_abs_exposure_diff, 0.0);
        assert_eq!(report.trades_diff, 0.0);
        assert_eq!(report.fees_diff, 0.0);
        assert_eq!(report.slip_diff, 0.0);
        assert_eq!(report.fund_diff, 0.0);
    }

    #[test]
    fn injected_exposure_fault_is_detected_and_tolerance_respected() {
        let (series, funding, params, profile, window) = replay_setup();
        let reference = run_backtest(
            &series,
            &funding,
            &params,
            &profile,
            &window,
            ExecutionSemantics::StrictT1,
        )
        .unwrap();
        let mut perturbed = reference.rows.clone();
        // Perturb a row that is already a trade boundary on both sides so
        // the cumulative trade count stays intact and only the exposure
        // diff registers.
        let target = (1..perturbed.len() - 1)
            .find(|&t| {
                perturbed[t].exposure != perturbed[t - 1].exposure
                    && perturbed[t + 1].exposure != perturbed[t].exposure
            })
            .expect("ledger has an isolated exposure change");
        perturbed[target].exposure += 0.1;
        let inputs = ReplayInputs {
            series: &series,
            funding: &funding,
            params: &params,
            profile: &profile,
            window: &window,
            semantics: ExecutionSemantics::StrictT1,
        };
        let strict = replay_and_audit(&inputs, &perturbed, 1e-9).unwrap();
        assert!(!strict.pass);
        assert!((strict.max_abs_exposure_diff - 0.1).abs() < 1e-12);
        let loose = replay_and_audit(&inputs, &perturbed, 0.2).unwrap();
        assert!(loose.pass);
    }

    fn ledger_row(i: i64, r_net: f64, exposure: f64) -> LedgerRow {
        LedgerRow {
            ts: Utc.timestamp_opt(i * 4 * 3600, 0).single().unwrap(),
            signal: 0,
            exposure,
            r_mkt: 0.0,
            r_raw: r_net,
            c_fee: 0.0,
            c_slip: 0.0,
            c_fund: 0.0,
            r_net,
        }
    }

    fn kill_on_drawdown_config(mode: KillMode) -> GuardConfig {
        GuardConfig {
            watch: GuardRules {
                max_drawdown: Some(0.10),
                ..GuardRules::default()
            },
            kill: GuardRules {
                max_drawdown: Some(0.25),
                ..GuardRules::default()
            },
            kill_mode: mode,
        }
    }

    #[test]
    fn flat_stream_stays_ok() {
        let rows: Vec<LedgerRow> = (0..600).map(|i| ledger_row(i, 0.0, 0.0)).collect();
        let (state, logs) = guard_step(
            GuardState::new(),
            &rows,
            &kill_on_drawdown_config(KillMode::Persistent),
        )
        .unwrap();
        assert_eq!(state.decision, GuardDecision::Ok);
        assert!(logs.iter().all(|l| l.decision == GuardDecision::Ok));
    }

    #[test]
    fn drawdown_kill_flattens_same_step_and_latches() {
        let mut rows: Vec<LedgerRow> = (0..20).map(|i| ledger_row(i, 0.0, 1.0)).collect();
        rows.push(ledger_row(20, -0.30, 1.0));
        let config = kill_on_drawdown_config(KillMode::Persistent);
        let (state, logs) = guard_step(GuardState::new(), &rows, &config).unwrap();
        let last = logs.last().unwrap();
        assert_eq!(last.decision, GuardDecision::Kill);
        assert!(last.flatten);
        assert!(state.disabled);

        // Profitable rows afterwards never un-kill without resume.
        let recovery: Vec<LedgerRow> = (21..60).map(|i| ledger_row(i, 0.05, 0.0)).collect();
        let (state, logs) = guard_step(state, &recovery, &config).unwrap();
        assert!(logs.iter().all(|l| l.decision == GuardDecision::Kill));
        assert_eq!(state.decision, GuardDecision::Kill);

        let resumed = state.resume();
        let post: Vec<LedgerRow> = (60..70).map(|i| ledger_row(i, 0.0, 0.0)).collect();
        let (state, logs) = guard_step(resumed, &post, &config).unwrap();
        assert_eq!(state.decision, GuardDecision::Ok);
        assert!(logs.iter().all(|l| l.decision == GuardDecision::Ok));
    }

    #[test]
    fn watch_between_thresholds_does_not_flatten() {
        let mut rows: Vec<LedgerRow> = (0..20).map(|i| ledger_row(i, 0.0, 1.0)).collect();
        rows.push(ledger_row(20, -0.15, 1.0));
        let (state, logs) = guard_step(
            GuardState::new(),
            &rows,
            &kill_on_drawdown_config(KillMode::Persistent),
        )
        .unwrap();
        assert_eq!(state.decision, GuardDecision::Watch);
        let last = logs.last().unwrap();
        assert_eq!(last.decision, GuardDecision::Watch);
        assert!(!last.flatten);
    }

    #[test]
    fn out_of_order_rows_rejected() {
        let rows = vec![ledger_row(5, 0.0, 0.0), ledger_row(4, 0.0, 0.0)];
        assert!(matches!(
            guard_step(
                GuardState::new(),
                &rows,
                &kill_on_drawdown_config(KillMode::Persistent)
            ),
            Err(AuditError::OutOfOrderRows(_))
        ));
    }

    #[test]
    fn kill_thresholds_must_be_as_severe_as_watch() {
        let config = GuardConfig {
            watch: GuardRules {
                max_drawdown: Some(0.30),
                ..GuardRules::default()
            },
            kill: GuardRules {
                max_drawdown: Some(0.10),
                ..GuardRules::default()
            },
            kill_mode: KillMode::Persistent,
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn guard_decisions_replay_identically() {
        let rows: Vec<LedgerRow> = (0..300)
            .map(|i| ledger_row(i, 0.01 * (((i * 13) % 7) as f64 - 3.0), (i % 3) as f64))
            .collect();
        let config = GuardConfig {
            watch: GuardRules {
                min_ann_return_30d: Some(-0.5),
                max_trade_frequency: Some(0.5),
                ..GuardRules::default()
            },
            kill: GuardRules {
                min_ann_return_30d: Some(-0.9),
                max_trade_frequency: Some(0.9),
                ..GuardRules::default()
            },
            kill_mode: KillMode::Temporary,
        };
        let (state_a, logs_a) = guard_step(GuardState::new(), &rows, &config).unwrap();
        let (state_b, logs_b) = guard_step(GuardState::new(), &rows, &config).unwrap();
        assert_eq!(state_a, state_b);
        assert_eq!(logs_a, logs_b);
    }
}
