//! Stage II double screening: re-evaluate a frozen candidate pool across
//! rolling windows and the cost-scenario grid, aggregate stability
//! statistics and apply the stable-candidate filter.
//!
//! No re-optimization happens here: candidate parameters are evaluated as
//! given, one strict backtest per (candidate, scenario), and the filter
//! consumes scenario-aggregated monthly / drawdown / turnover statistics.

use crate::costs::{CostProfile, CostScenario};
use crate::engine::{run_backtest, EngineError, ExecutionSemantics};
use crate::marketdata::{BarSeries, FundingSeries, WindowSpec};
use crate::signal::StrategyParams;
use chrono::{DateTime, Datelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScreeningError {
    #[error("window length {win} exceeds series length {n}")]
    WindowTooLong { win: usize, n: usize },

    #[error("step must be >= 1")]
    ZeroStep,

    #[error("window length must be >= 1")]
    ZeroWindow,

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("scenario list is empty")]
    NoScenarios,

    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Thresholds of the stable-candidate filter and the selection size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StablePolicy {
    pub min_mean_monthly: f64,
    pub min_worst_monthly: f64,
    pub max_mean_dd: f64,
    pub max_switch_density: f64,
    pub top_k: usize,
}

impl Default for StablePolicy {
    fn default() -> Self {
        Self {
            min_mean_monthly: 0.005,
            min_worst_monthly: 0.0,
            max_mean_dd: 0.30,
            max_switch_density: 0.12,
            top_k: 5,
        }
    }
}

/// Per-scenario statistics for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub scenario: String,
    pub monthly_geom: f64,
    pub max_dd: f64,
    pub switch_density: f64,
}

/// Scenario-level stats plus their exact mean/min aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub candidate_id: usize,
    pub per_scenario: Vec<ScenarioStats>,
    pub mean_monthly_true: f64,
    pub min_monthly_true: f64,
    pub max_dd_mean: f64,
    pub switch_density_mean: f64,
}

/// Outcome of the stable-candidate filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub pool_size: usize,
    pub passing: Vec<usize>,
    pub top_k: Vec<usize>,
    pub policy: StablePolicy,
}

/// Per-candidate stats over one rolling window (robustness report only;
/// the stable filter consumes scenario aggregates, not window streams).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub candidate_id: usize,
    pub window_index: usize,
    pub start_bar: usize,
    pub end_bar: usize,
    pub monthly_geom: f64,
    pub max_dd: f64,
    pub switch_density: f64,
}

/// Fixed-length index windows stepped forward while they fit.
pub fn rolling_windows(
    n_bars: usize,
    win: usize,
    step: usize,
) -> Result<Vec<(usize, usize)>, ScreeningError> {
    if win == 0 {
        return Err(ScreeningError::ZeroWindow);
    }
    if step == 0 {
        return Err(ScreeningError::ZeroStep);
    }
    if win > n_bars {
        return Err(ScreeningError::WindowTooLong { win, n: n_bars });
    }
    let mut windows = Vec::new();
    let mut start = 0usize;
    while start + win <= n_bars {
        windows.push((start, start + win));
        start += step;
    }
    Ok(windows)
}

/// Geometric mean of already-monthly compounded returns, floored at
/// -0.999999 before the log.
pub fn monthly_geom_from_monthly(monthly: &[f64]) -> f64 {
    if monthly.is_empty() {
        return 0.0;
    }
    let mean_log = monthly
        .iter()
        .map(|&r| (1.0 + r.max(-0.999999)).ln())
        .sum::<f64>()
        / monthly.len() as f64;
    mean_log.exp() - 1.0
}

/// Buckets per-bar returns by UTC calendar month, compounds each month,
/// then takes the floored geometric mean across months. Partial trailing
/// months are included as-is.
pub fn monthly_geom(returns: &[(DateTime<Utc>, f64)]) -> f64 {
    if returns.is_empty() {
        return 0.0;
    }
    let mut monthly = Vec::new();
    let mut current_key = (returns[0].0.year(), returns[0].0.month());
    let mut acc = 1.0f64;
    for &(ts, r) in returns {
        let key = (ts.year(), ts.month());
        if key != current_key {
            monthly.push(acc - 1.0);
            current_key = key;
            acc = 1.0;
        }
        acc *= 1.0 + r;
    }
    monthly.push(acc - 1.0);
    monthly_geom_from_monthly(&monthly)
}

/// Scenario-level stats computed directly from a ledger.
///
/// Unlike the headline metrics these stay total even for ruined runs: the
/// monthly floor absorbs a -100% month and drawdown is clamped to 1.
fn ledger_scenario_stats(rows: &[crate::engine::LedgerRow]) -> (f64, f64, f64) {
    let monthly: Vec<(DateTime<Utc>, f64)> = rows.iter().map(|r| (r.ts, r.r_net)).collect();
    let g = monthly_geom(&monthly);

    let mut equity = 1.0f64;
    let mut peak = 1.0f64;
    let mut max_dd = 0.0f64;
    for row in rows {
        equity *= 1.0 + row.r_net;
        if equity < 0.0 {
            equity = 0.0;
        }
        peak = peak.max(equity);
        if peak > 0.0 {
            max_dd = max_dd.max(1.0 - equity / peak);
        }
    }
    max_dd = max_dd.clamp(0.0, 1.0);

    let mut trades = 0usize;
    let mut prev = 0.0f64;
    for row in rows {
        if row.exposure != prev {
            trades += 1;
        }
        prev = row.exposure;
    }
    let switch_density = trades as f64 / rows.len().max(1) as f64;
    (g, max_dd, switch_density)
}

/// One strict backtest per (candidate, scenario); candidates are numbered
/// 1-based in pool order and never mutated.
pub fn evaluate_pool(
    pool: &[StrategyParams],
    data: &BarSeries,
    funding: &FundingSeries,
    base_profile: &CostProfile,
    scenarios: &[CostScenario],
    window: &WindowSpec,
) -> Result<Vec<ScenarioSummary>, ScreeningError> {
    if pool.is_empty() {
        return Err(ScreeningError::EmptyPool);
    }
    if scenarios.is_empty() {
        return Err(ScreeningError::NoScenarios);
    }

    let summaries: Result<Vec<ScenarioSummary>, ScreeningError> = pool
        .par_iter()
        .enumerate()
        .map(|(i, params)| {
            let mut per_scenario = Vec::with_capacity(scenarios.len());
            for scenario in scenarios {
                let profile = scenario.apply(base_profile);
                let result = run_backtest(
                    data,
                    funding,
                    params,
                    &profile,
                    window,
                    ExecutionSemantics::StrictT1,
                )?;
                let (g, dd, sw) = ledger_scenario_stats(&result.rows);
                per_scenario.push(ScenarioStats {
                    scenario: scenario.label.clone(),
                    monthly_geom: g,
                    max_dd: dd,
                    switch_density: sw,
                });
            }
            let n = per_scenario.len() as f64;
            let mean_monthly = per_scenario.iter().map(|s| s.monthly_geom).sum::<f64>() / n;
            let min_monthly = per_scenario
                .iter()
                .map(|s| s.monthly_geom)
                .fold(f64::INFINITY, f64::min);
            let dd_mean = per_scenario.iter().map(|s| s.max_dd).sum::<f64>() / n;
            let sw_mean = per_scenario.iter().map(|s| s.switch_density).sum::<f64>() / n;
            Ok(ScenarioSummary {
                candidate_id: i + 1,
                per_scenario,
                mean_monthly_true: mean_monthly,
                min_monthly_true: min_monthly,
                max_dd_mean: dd_mean,
                switch_density_mean: sw_mean,
            })
        })
        .collect();
    summaries
}

/// Per-candidate stats over each rolling window (report stream).
pub fn evaluate_rolling_windows(
    pool: &[StrategyParams],
    data: &BarSeries,
    funding: &FundingSeries,
    profile: &CostProfile,
    win: usize,
    step: usize,
) -> Result<Vec<WindowStats>, ScreeningError> {
    let windows = rolling_windows(data.len(), win, step)?;
    let bars = data.bars();
    let freq = chrono::Duration::hours(data.freq_hours() as i64);
    let mut out = Vec::new();
    for (wi, &(s, e)) in windows.iter().enumerate() {
        let spec = WindowSpec::new(format!("roll{wi}"), bars[s].ts, bars[e - 1].ts + freq)
            .expect("window bounds ordered");
        for (i, params) in pool.iter().enumerate() {
            let result = run_backtest(
                data,
                funding,
                params,
                profile,
                &spec,
                ExecutionSemantics::StrictT1,
            )?;
            let (g, dd, sw) = ledger_scenario_stats(&result.rows);
            out.push(WindowStats {
                candidate_id: i + 1,
                window_index: wi,
                start_bar: s,
                end_bar: e,
                monthly_geom: g,
                max_dd: dd,
                switch_density: sw,
            });
        }
    }
    Ok(out)
}

/// Applies the stable-candidate thresholds, then ranks the passing set by
/// (mean monthly desc, mean drawdown asc, id asc) and takes `top_k`.
pub fn stable_filter(summaries: &[ScenarioSummary], policy: &StablePolicy) -> ScreeningReport {
    let mut passing: Vec<&ScenarioSummary> = summaries
        .iter()
        .filter(|s| {
            s.mean_monthly_true >= policy.min_mean_monthly
                && s.min_monthly_true >= policy.min_worst_monthly
                && s.max_dd_mean <= policy.max_mean_dd
                && s.switch_density_mean <= policy.max_switch_density
        })
        .collect();
    passing.sort_by(|a, b| {
        b.mean_monthly_true
            .partial_cmp(&a.mean_monthly_true)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                a.max_dd_mean
                    .partial_cmp(&b.max_dd_mean)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(a.candidate_id.cmp(&b.candidate_id))
    });
    let passing_ids: Vec<usize> = passing.iter().map(|s| s.candidate_id).collect();
    let top_k: Vec<usize> = passing_ids.iter().copied().take(policy.top_k).collect();
    ScreeningReport {
        pool_size: summaries.len(),
        passing: passing_ids,
        top_k,
        policy: policy.clone(),
    }
}

/// One row of a threshold-sensitivity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub min_mean_monthly: f64,
    pub max_mean_dd: f64,
    pub max_switch_density: f64,
    pub selected: Option<usize>,
    pub n_passing: usize,
}

/// Runs the stable filter across the cartesian product of threshold
/// grids, reporting the top-1 selection and passing count per variant.
pub fn threshold_scan(
    summaries: &[ScenarioSummary],
    floor_grid: &[f64],
    dd_grid: &[f64],
    switch_grid: &[f64],
    base_policy: &StablePolicy,
) -> Vec<ScanRow> {
    let mut rows = Vec::with_capacity(floor_grid.len() * dd_grid.len() * switch_grid.len());
    for &floor in floor_grid {
        for &dd in dd_grid {
            for &sw in switch_grid {
                let policy = StablePolicy {
                    min_mean_monthly: floor,
                    max_mean_dd: dd,
                    max_switch_density: sw,
                    ..base_policy.clone()
                };
                let report = stable_filter(summaries, &policy);
                rows.push(ScanRow {
                    min_mean_monthly: floor,
                    max_mean_dd: dd,
                    max_switch_density: sw,
                    selected: report.top_k.first().copied(),
                    n_passing: report.passing.len(),
                });
            }
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

/// Writes `candidate_id,scenario,monthly_geom,max_dd,switch_density`.
pub fn write_robust_summary_csv(
    summaries: &[ScenarioSummary],
    run_id: Option<&str>,
    mut writer: impl std::io::Write,
) -> std::io::Result<()> {
    if let Some(id) = run_id {
        writeln!(writer, "# run_id={id}")?;
    }
    writeln!(
        writer,
        "candidate_id,scenario,monthly_geom,max_dd,switch_density"
    )?;
    for summary in summaries {
        for s in &summary.per_scenario {
            writeln!(
                writer,
                "{},{},{},{},{}",
                summary.candidate_id, s.scenario, s.monthly_geom, s.max_dd, s.switch_density
            )?;
        }
    }
    Ok(())
}

/// Writes the four filter statistics per candidate.
pub fn write_aggregates_csv(
    summaries: &[ScenarioSummary],
    run_id: Option<&str>,
    mut writer: impl std::io::Write,
) -> std::io::Result<()> {
    if let Some(id) = run_id {
        writeln!(writer, "# run_id={id}")?;
    }
    writeln!(
        writer,
        "candidate_id,mean_monthly_true,min_monthly_true,max_dd_mean,switch_density_mean"
    )?;
    for s in summaries {
        writeln!(
            writer,
            "{},{},{},{},{}",
            s.candidate_id,
            s.mean_monthly_true,
            s.min_monthly_true,
            s.max_dd_mean,
            s.switch_density_mean
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(days: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(days * 86_400, 0).single().unwrap()
    }

    #[test]
    fn rolling_window_counts() {
        assert_eq!(rolling_windows(6000, 2000, 500).unwrap().len(), 9);
        assert_eq!(rolling_windows(2000, 2000, 500).unwrap().len(), 1);
        let w = rolling_windows(3000, 2000, 500).unwrap();
        assert_eq!(w, vec![(0, 2000), (500, 2500), (1000, 3000)]);
        assert!(rolling_windows(100, 200, 50).is_err());
    }

    #[test]
    fn monthly_geom_zero_returns() {
        let returns: Vec<(DateTime<Utc>, f64)> = (0..90).map(|d| (ts(d), 0.0)).collect();
        assert_eq!(monthly_geom(&returns), 0.0);
    }

    #[test]
    fn monthly_geom_perfect_square() {
        // January compounds to +21%, February to 0%.
        let mut returns = Vec::new();
        returns.push((ts(0), 0.21));
        for d in 1..31 {
            returns.push((ts(d), 0.0));
        }
        for d in 31..59 {
            returns.push((ts(d), 0.0));
        }
        let g = monthly_geom(&returns);
        assert!((g - 0.1).abs() < 1e-12);
    }

    #[test]
    fn monthly_geom_floors_total_loss() {
        let returns = vec![(ts(0), -1.0), (ts(40), 0.0)];
        let g = monthly_geom(&returns);
        assert!(g.is_finite());
        assert!(g > -1.0);
    }

    #[test]
    fn higher_funding_multiplier_never_helps_a_long_book() {
        // Steady uptrend keeps the candidate long after warm-up; with
        // positive funding throughout, the 1.5x funding scenario must not
        // beat the 0.5x one at equal fees.
        use crate::marketdata::{Bar, FundingSeries};
        let bars: Vec<Bar> = (0..400)
            .map(|i| {
                let price = 100.0 * 1.004f64.powi(i);
                Bar {
                    ts: Utc.timestamp_opt(i as i64 * 4 * 3600, 0).single().unwrap(),
                    open: price,
                    high: price * 1.001,
                    low: price * 0.999,
                    close: price,
                    volume: 1.0,
                }
            })
            .collect();
        let series = BarSeries::new(bars, 4).unwrap();
        let funding = FundingSeries::constant_fallback(0.0006).unwrap();
        let window = series.full_window("w");
        let pool = vec![crate::signal::StrategyParams {
            ema_threshold: 0.0005,
            ..crate::signal::StrategyParams::default()
        }];
        let base = CostProfile::default();
        let grid = crate::costs::scenario_grid(&base);
        let summaries = evaluate_pool(&pool, &series, &funding, &base, &grid, &window).unwrap();
        let stats = &summaries[0].per_scenario;
        for fee in ["fee3", "fee4", "fee6"] {
            let g_of = |mult: &str| {
                stats
                    .iter()
                    .find(|s| s.scenario == format!("{fee}_{mult}"))
                    .unwrap()
                    .monthly_geom
            };
            assert!(
                g_of("fund0.5") >= g_of("fund1.5"),
                "{fee}: cheap funding must not underperform expensive funding"
            );
        }
    }

    #[test]
    fn zero_cost_scenarios_collapse_to_identical_stats() {
        use crate::marketdata::FundingSeries;
        use crate::synth::{gen_series, SynthSeriesConfig};
        let series = gen_series(&SynthSeriesConfig {
            seed: 55,
            n_bars: 300,
            ..SynthSeriesConfig::default()
        });
        let funding = FundingSeries::constant_fallback(0.0004).unwrap();
        let window = series.full_window("w");
        let pool = vec![crate::signal::StrategyParams {
            ema_threshold: 0.0008,
            funding_gates_enabled: false,
            ..crate::signal::StrategyParams::default()
        }];
        // Degenerate grid: every scenario removes all costs, so the
        // per-scenario statistics must be bit-identical.
        let base = CostProfile::default().zero_cost();
        let scenarios: Vec<CostScenario> = [0.5, 1.0, 1.5]
            .iter()
            .map(|mult| CostScenario {
                label: format!("zero_{mult}"),
                taker_fee_bps: 0.0,
                funding_multiplier: *mult,
            })
            .collect();
        let summaries =
            evaluate_pool(&pool, &series, &funding, &base, &scenarios, &window).unwrap();
        let stats = &summaries[0].per_scenario;
        for s in &stats[1..] {
            assert_eq!(s.monthly_geom, stats[0].monthly_geom);
            assert_eq!(s.max_dd, stats[0].max_dd);
            assert_eq!(s.switch_density, stats[0].switch_density);
        }
        assert_eq!(
            summaries[0].mean_monthly_true,
            summaries[0].min_monthly_true
        );
    }

    fn summary(
        id: usize,
        mean_monthly: f64,
        min_monthly: f64,
        dd: f64,
        sw: f64,
    ) -> ScenarioSummary {
        ScenarioSummary {
            candidate_id: id,
            per_scenario: Vec::new(),
            mean_monthly_true: mean_monthly,
            min_monthly_true: min_monthly,
            max_dd_mean: dd,
            switch_density_mean: sw,
        }
    }

    #[test]
    fn filter_rejects_boundary_violations() {
        let policy = StablePolicy::default();
        let below_floor = vec![summary(1, 0.004, 0.001, 0.10, 0.05)];
        assert!(stable_filter(&below_floor, &policy).passing.is_empty());
        let dd_breach = vec![summary(1, 0.02, 0.001, 0.31, 0.05)];
        assert!(stable_filter(&dd_breach, &policy).passing.is_empty());
        let ok = vec![summary(1, 0.0051, 0.0, 0.29, 0.11)];
        assert_eq!(stable_filter(&ok, &policy).top_k, vec![1]);
    }

    #[test]
    fn filter_ranking_uses_drawdown_as_secondary_key() {
        let policy = StablePolicy::default();
        let summaries = vec![
            summary(1, 0.02, 0.001, 0.20, 0.05),
            summary(2, 0.02, 0.001, 0.10, 0.05),
            summary(3, 0.03, 0.001, 0.25, 0.05),
        ];
        let report = stable_filter(&summaries, &policy);
        assert_eq!(report.top_k, vec![3, 2, 1]);
    }

    #[test]
    fn threshold_scan_3x3x3_yields_27_rows() {
        let summaries = vec![
            summary(1, 0.02, 0.001, 0.20, 0.05),
            summary(2, 0.004, 0.0, 0.10, 0.05),
        ];
        let rows = threshold_scan(
            &summaries,
            &[0.003, 0.005, 0.007],
            &[0.25, 0.30, 0.35],
            &[0.10, 0.12, 0.14],
            &StablePolicy::default(),
        );
        assert_eq!(rows.len(), 27);
    }

    #[test]
    fn degenerate_scan_matches_stable_filter() {
        let summaries = vec![summary(1, 0.02, 0.001, 0.20, 0.05)];
        let policy = StablePolicy::default();
        let rows = threshold_scan(&summaries, &[0.005], &[0.30], &[0.12], &policy);
        assert_eq!(rows.len(), 1);
        let direct = stable_filter(&summaries, &policy);
        assert_eq!(rows[0].selected, direct.top_k.first().copied());
        assert_eq!(rows[0].n_passing, direct.passing.len());
    }

    #[test]
    fn loosening_dd_cap_never_shrinks_passing_set() {
        let summaries = vec![
            summary(1, 0.02, 0.001, 0.20, 0.05),
            summary(2, 0.02, 0.001, 0.28, 0.05),
            summary(3, 0.02, 0.001, 0.33, 0.05),
        ];
        let mut last = 0usize;
        for dd in [0.15, 0.25, 0.30, 0.35] {
            let policy = StablePolicy {
                max_mean_dd: dd,
                ..StablePolicy::default()
            };
            let n = stable_filter(&summaries, &policy).passing.len();
            assert!(n >= last);
            last = n;
        }
    }
}
