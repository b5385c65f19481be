//! Cost-ladder, funding-gate and execution-semantics ablations.
//!
//! Each ablation holds everything fixed except one modeling choice and
//! reruns the full engine, so realized trade sequences may legitimately
//! differ between variants whenever funding-dependent gates see different
//! inputs.

use super::{percentile_sorted, DiagnosticsError};
use crate::costs::CostProfile;
use crate::engine::{metrics, run_backtest, BacktestResult, ExecutionSemantics, MetricsSummary};
use crate::marketdata::{BarSeries, FundingSeries, WindowSpec};
use crate::signal::StrategyParams;
use crate::tuner::SENTINEL_SCORE;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Summary row of one cost-ladder variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderVariant {
    pub label: String,
    pub ann_return: f64,
    pub sharpe: f64,
    pub max_dd: f64,
    pub trades: usize,
    pub total_net_return: f64,
}

/// The three-rung ladder: fully costed, fee-only, zero-cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLadderReport {
    pub rigorous: LadderVariant,
    pub standard: LadderVariant,
    pub naive: LadderVariant,
}

fn ladder_variant(label: &str, result: &BacktestResult, summary: &MetricsSummary) -> LadderVariant {
    let total: f64 = result.rows.iter().map(|r| 1.0 + r.r_net).product::<f64>() - 1.0;
    LadderVariant {
        label: label.to_string(),
        ann_return: summary.ann_return,
        sharpe: summary.sharpe,
        max_dd: summary.max_dd,
        trades: summary.trades.unwrap_or(0),
        total_net_return: total,
    }
}

/// Three full backtests with identical signal logic: rigorous
/// (fees + slippage + funding), standard (fees only) and naive
/// (zero-cost, with caps optionally relaxed as an upper bound).
pub fn cost_ablation(
    params: &StrategyParams,
    data: &BarSeries,
    funding: &FundingSeries,
    base_profile: &CostProfile,
    window: &WindowSpec,
    rf_annual: f64,
    relax_naive_caps: bool,
) -> Result<CostLadderReport, DiagnosticsError> {
    let rigorous_profile = base_profile.clone();
    let standard_profile = base_profile.fee_only();
    let mut naive_profile = base_profile.zero_cost();
    if relax_naive_caps {
        naive_profile.max_leverage *= 1_000.0;
        naive_profile.notional_cap *= 1_000.0;
    }

    let run =
        |profile: &CostProfile| -> Result<(BacktestResult, MetricsSummary), DiagnosticsError> {
            let result = run_backtest(
                data,
                funding,
                params,
                profile,
                window,
                ExecutionSemantics::StrictT1,
            )?;
            let summary = metrics(&result, rf_annual)?;
            Ok((result, summary))
        };

    let (rig_res, rig_sum) = run(&rigorous_profile)?;
    let (std_res, std_sum) = run(&standard_profile)?;
    let (nai_res, nai_sum) = run(&naive_profile)?;
    Ok(CostLadderReport {
        rigorous: ladder_variant("rigorous", &rig_res, &rig_sum),
        standard: ladder_variant("standard", &std_res, &std_sum),
        naive: ladder_variant("naive", &nai_res, &nai_sum),
    })
}

/// Paired runs differing only in `funding_gates_enabled`; costs and
/// execution semantics are held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct GateAblationReport {
    pub gated: BacktestResult,
    pub ungated: BacktestResult,
}

impl GateAblationReport {
    /// Long-entry counts (transitions into +1) for the gated and ungated
    /// signal columns.
    pub fn long_entry_counts(&self) -> (usize, usize) {
        fn entries(result: &BacktestResult) -> usize {
            let mut count = 0usize;
            let mut prev = 0i8;
            for row in &result.rows {
                if row.signal == 1 && prev != 1 {
                    count += 1;
                }
                prev = row.signal;
            }
            count
        }
        (entries(&self.gated), entries(&self.ungated))
    }
}

pub fn funding_gate_ablation(
    params: &StrategyParams,
    data: &BarSeries,
    funding: &FundingSeries,
    profile: &CostProfile,
    window: &WindowSpec,
) -> Result<GateAblationReport, DiagnosticsError> {
    let gated_params = StrategyParams {
        funding_gates_enabled: true,
        ..params.clone()
    };
    let ungated_params = StrategyParams {
        funding_gates_enabled: false,
        ..params.clone()
    };
    let gated = run_backtest(
        data,
        funding,
        &gated_params,
        profile,
        window,
        ExecutionSemantics::StrictT1,
    )?;
    let ungated = run_backtest(
        data,
        funding,
        &ungated_params,
        profile,
        window,
        ExecutionSemantics::StrictT1,
    )?;
    Ok(GateAblationReport { gated, ungated })
}

/// Batch uplift of naive t+0 over strict t+1 annualized return across a
/// frozen pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftReport {
    pub n: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub frac_positive: f64,
    pub deltas: Vec<f64>,
}

/// Per trial: `ann(naive_t0) - ann(strict_t1)`; ruined or failed runs
/// contribute the -1.0 sentinel annualized return on their side.
pub fn semantics_uplift(
    pool: &[StrategyParams],
    data: &BarSeries,
    funding: &FundingSeries,
    window: &WindowSpec,
    profile: &CostProfile,
    rf_annual: f64,
) -> Result<UpliftReport, DiagnosticsError> {
    if pool.is_empty() {
        return Err(DiagnosticsError::EmptyPool);
    }
    let ann_of = |params: &StrategyParams, semantics: ExecutionSemantics| -> f64 {
        run_backtest(data, funding, params, profile, window, semantics)
            .ok()
            .and_then(|result| metrics(&result, rf_annual).ok())
            .map_or(SENTINEL_SCORE, |m| m.ann_return)
    };
    let deltas: Vec<f64> = pool
        .par_iter()
        .map(|params| {
            ann_of(params, ExecutionSemantics::NaiveT0)
                - ann_of(params, ExecutionSemantics::StrictT1)
        })
        .collect();

    let mut sorted = deltas.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = deltas.len();
    Ok(UpliftReport {
        n,
        median: percentile_sorted(&sorted, 0.5),
        p25: percentile_sorted(&sorted, 0.25),
        p75: percentile_sorted(&sorted, 0.75),
        frac_positive: deltas.iter().filter(|&&d| d > 0.0).count() as f64 / n as f64,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_series, SynthSeriesConfig};

    fn test_setup() -> (BarSeries, FundingSeries, WindowSpec, StrategyParams) {
        let series = gen_series(&SynthSeriesConfig {
            seed: 77,
            n_bars: 600,
            ..SynthSeriesConfig::default()
        });
        let funding = FundingSeries::constant_fallback(0.0).unwrap();
        let window = series.full_window("w");
        let params = StrategyParams {
            ema_threshold: 0.0005,
            ..StrategyParams::default()
        };
        (series, funding, window, params)
    }

    #[test]
    fn ladder_ordering_with_gates_disabled_and_zero_funding() {
        let (series, funding, window, params) = test_setup();
        let params = StrategyParams {
            funding_gates_enabled: false,
            ..params
        };
        let report = cost_ablation(
            &params,
            &series,
            &funding,
            &CostProfile::default(),
            &window,
            0.03,
            false,
        )
        .unwrap();
        assert!(report.naive.total_net_return >= report.standard.total_net_return);
        assert!(report.standard.total_net_return >= report.rigorous.total_net_return);
    }

    #[test]
    fn ladder_is_ordered_row_wise_at_fixed_exposure_path() {
        // Gates disabled and zero funding fix the exposure path, so the
        // per-bar net return must be non-increasing from naive to
        // standard to rigorous.
        let (series, funding, window, params) = test_setup();
        let params = StrategyParams {
            funding_gates_enabled: false,
            ..params
        };
        let base = CostProfile::default();
        let run = |profile: &CostProfile| {
            run_backtest(
                &series,
                &funding,
                &params,
                profile,
                &window,
                ExecutionSemantics::StrictT1,
            )
            .unwrap()
        };
        let rigorous = run(&base);
        let standard = run(&base.fee_only());
        let naive = run(&base.zero_cost());
        for ((r, s), n) in rigorous.rows.iter().zip(&standard.rows).zip(&naive.rows) {
            assert_eq!(r.exposure, s.exposure);
            assert_eq!(s.exposure, n.exposure);
            assert!(n.r_net >= s.r_net);
            assert!(s.r_net >= r.r_net);
        }
    }

    #[test]
    fn standard_variant_has_fees_only() {
        let (series, funding, window, params) = test_setup();
        let profile = CostProfile::default().fee_only();
        let result = run_backtest(
            &series,
            &funding,
            &params,
            &profile,
            &window,
            ExecutionSemantics::StrictT1,
        )
        .unwrap();
        assert!(result
            .rows
            .iter()
            .all(|r| r.c_slip == 0.0 && r.c_fund == 0.0));
        assert!(result.rows.iter().any(|r| r.c_fee > 0.0));
    }

    #[test]
    fn zero_cost_variant_ledger_is_cost_free() {
        let (series, funding, window, params) = test_setup();
        let profile = CostProfile::default().zero_cost();
        let result = run_backtest(
            &series,
            &funding,
            &params,
            &profile,
            &window,
            ExecutionSemantics::StrictT1,
        )
        .unwrap();
        assert!(result
            .rows
            .iter()
            .all(|r| r.c_fee == 0.0 && r.c_slip == 0.0 && r.c_fund == 0.0));
    }

    #[test]
    fn gate_ablation_identical_under_zero_funding() {
        let (series, funding, window, params) = test_setup();
        let params = StrategyParams {
            funding_bias_thr_bps: 5.0,
            funding_bias_k_thr_per_bps: 0.004,
            ..params
        };
        let report =
            funding_gate_ablation(&params, &series, &funding, &CostProfile::default(), &window)
                .unwrap();
        assert_eq!(report.gated.rows, report.ungated.rows);
    }

    #[test]
    fn gate_ablation_identical_with_zero_slope() {
        let (series, _, window, params) = test_setup();
        let funding = FundingSeries::constant_fallback(0.0008).unwrap();
        let params = StrategyParams {
            funding_bias_thr_bps: 2.0,
            funding_bias_k_thr_per_bps: 0.0,
            ..params
        };
        let report =
            funding_gate_ablation(&params, &series, &funding, &CostProfile::default(), &window)
                .unwrap();
        assert_eq!(report.gated.rows, report.ungated.rows);
    }

    #[test]
    fn gating_never_adds_long_entries_under_positive_funding() {
        let (series, _, window, params) = test_setup();
        let funding = FundingSeries::constant_fallback(0.0012).unwrap();
        let params = StrategyParams {
            funding_bias_thr_bps: 1.0,
            funding_bias_k_thr_per_bps: 0.005,
            ..params
        };
        let report =
            funding_gate_ablation(&params, &series, &funding, &CostProfile::default(), &window)
                .unwrap();
        let (gated, ungated) = report.long_entry_counts();
        assert!(gated <= ungated, "gated {gated} > ungated {ungated}");
    }

    #[test]
    fn uplift_on_flat_prices_is_all_zero() {
        let series = {
            use crate::marketdata::{Bar, BarSeries};
            use chrono::{TimeZone, Utc};
            let bars: Vec<Bar> = (0..200)
                .map(|i| Bar {
                    ts: Utc.timestamp_opt(i * 4 * 3600, 0).single().unwrap(),
                    open: 100.0,
                    high: 100.0,
                    low: 100.0,
                    close: 100.0,
                    volume: 1.0,
                })
                .collect();
            BarSeries::new(bars, 4).unwrap()
        };
        let funding = FundingSeries::constant_fallback(0.0).unwrap();
        let window = series.full_window("w");
        let pool = vec![StrategyParams::default(), {
            StrategyParams {
                w_mom: 0.3,
                ..StrategyParams::default()
            }
        }];
        let report = semantics_uplift(
            &pool,
            &series,
            &funding,
            &window,
            &CostProfile::default(),
            0.0,
        )
        .unwrap();
        assert!(report.deltas.iter().all(|&d| d == 0.0));
        assert_eq!(report.median, 0.0);
    }

    #[test]
    fn uplift_percentiles_are_ordered() {
        let (series, funding, window, _) = test_setup();
        let pool: Vec<StrategyParams> = (0..5)
            .map(|i| StrategyParams {
                ema_fast: 6 + i,
                ema_threshold: 0.0005 + 0.0002 * i as f64,
                ..StrategyParams::default()
            })
            .collect();
        let report = semantics_uplift(
            &pool,
            &series,
            &funding,
            &window,
            &CostProfile::default(),
            0.03,
        )
        .unwrap();
        assert!(report.p25 <= report.median && report.median <= report.p75);
        assert_eq!(report.n, 5);
    }

    #[test]
    fn single_candidate_median_is_its_delta() {
        let (series, funding, window, params) = test_setup();
        let report = semantics_uplift(
            &[params],
            &series,
            &funding,
            &window,
            &CostProfile::default(),
            0.03,
        )
        .unwrap();
        assert_eq!(report.n, 1);
        assert_eq!(report.median, report.deltas[0]);
        assert_eq!(report.p25, report.deltas[0]);
        assert_eq!(report.p75, report.deltas[0]);
    }
}
