//! Momentum / mean-reversion composite signal with funding-biased entry
//! thresholds and causal risk controls.
//!
//! Every quantity at bar `t` is a function of closes, indicator state and
//! aligned funding available at the close of `t` only. Scores live in
//! `[0, 1]`: the momentum score squashes the normalized EMA spread, the
//! anomaly score is a directional Bollinger mean-reversion reading, and
//! the composite is their convex combination. Entry thresholds are raised
//! under adverse funding through a soft bias channel that is disabled
//! when the slope is zero.

use crate::marketdata::BarSeries;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("parameter `{name}` = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("ema_fast ({fast}) must be shorter than ema_slow ({slow})")]
    EmaOrder { fast: u32, slow: u32 },

    #[error("funding alignment length {funding} does not match series length {bars}")]
    FundingLengthMismatch { funding: usize, bars: usize },
}

/// Strategy hyperparameters.
///
/// Zero-valued risk knobs mean disabled. `funding_bias_k_thr_per_bps` is
/// stored as threshold increase per bp of funding; internally it is
/// converted (x10000) to the per-decimal slope used against decimal rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub ema_fast: u32,
    pub ema_slow: u32,
    pub ema_threshold: f64,
    pub theta_momentum: f64,
    pub w_mom: f64,
    pub bb_period: u32,
    pub bb_dev: f64,
    pub min_hold_bars: u32,
    pub cooldown_hours: f64,
    pub atr_period: u32,
    pub atr_k_sl: f64,
    pub atr_k_tp: f64,
    pub max_exposure_abs: f64,
    pub funding_bias_thr_bps: f64,
    pub funding_bias_k_thr_per_bps: f64,
    pub funding_gates_enabled: bool,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            ema_fast: 12,
            ema_slow: 26,
            ema_threshold: 0.003,
            theta_momentum: 0.01,
            w_mom: 0.6,
            bb_period: 20,
            bb_dev: 2.0,
            min_hold_bars: 1,
            cooldown_hours: 0.0,
            atr_period: 0,
            atr_k_sl: 0.0,
            atr_k_tp: 0.0,
            max_exposure_abs: 0.0,
            funding_bias_thr_bps: 0.0,
            funding_bias_k_thr_per_bps: 0.0,
            funding_gates_enabled: true,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<(), SignalError> {
        fn check(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), SignalError> {
            if !value.is_finite() || value < lo || value > hi {
                return Err(SignalError::OutOfBounds {
                    name,
                    value,
                    lo,
                    hi,
                });
            }
            Ok(())
        }
        check("ema_fast", self.ema_fast as f64, 6.0, 32.0)?;
        check("ema_slow", self.ema_slow as f64, 20.0, 96.0)?;
        if self.ema_fast >= self.ema_slow {
            return Err(SignalError::EmaOrder {
                fast: self.ema_fast,
                slow: self.ema_slow,
            });
        }
        check("ema_threshold", self.ema_threshold, 0.0005, 0.0060)?;
        if !self.theta_momentum.is_finite() || self.theta_momentum <= 0.0 {
            return Err(SignalError::OutOfBounds {
                name: "theta_momentum",
                value: self.theta_momentum,
                lo: f64::MIN_POSITIVE,
                hi: f64::INFINITY,
            });
        }
        check("w_mom", self.w_mom, 0.0, 1.0)?;
        check("bb_period", self.bb_period as f64, 10.0, 30.0)?;
        check("bb_dev", self.bb_dev, 1.0, 2.5)?;
        check("min_hold_bars", self.min_hold_bars as f64, 1.0, 6.0)?;
        check("cooldown_hours", self.cooldown_hours, 0.0, 8.0)?;
        check("atr_period", self.atr_period as f64, 0.0, 30.0)?;
        check("atr_k_sl", self.atr_k_sl, 0.0, 3.0)?;
        check("atr_k_tp", self.atr_k_tp, 0.0, 5.0)?;
        check("max_exposure_abs", self.max_exposure_abs, 0.0, 5.0)?;
        check("funding_bias_thr_bps", self.funding_bias_thr_bps, 0.0, 10.0)?;
        check(
            "funding_bias_k_thr_per_bps",
            self.funding_bias_k_thr_per_bps,
            0.0,
            0.005,
        )?;
        Ok(())
    }

    /// Indicator warm-up in bars; signals before this index are 0.
    pub fn warmup_bars(&self) -> usize {
        (self.ema_slow.max(self.bb_period).max(self.atr_period)) as usize
    }
}

/// Per-bar indicator values; `ready` is false during warm-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorSnapshot {
    pub ema_fast_val: f64,
    pub ema_slow_val: f64,
    pub bb_z: f64,
    pub atr_val: f64,
    pub ready: bool,
}

/// Normalized EMA divergence squashed into [0, 1]; 0.5 when fast = slow.
pub fn momentum_score(ema_fast_val: f64, ema_slow_val: f64, theta_momentum: f64) -> f64 {
    0.5 * (1.0 + ((ema_fast_val - ema_slow_val) / (theta_momentum * ema_slow_val)).tanh())
}

/// Directional Bollinger mean-reversion score in [0, 1].
///
/// Price far below the bands (negative z) reads bullish (> 0.5),
/// far above reads bearish (< 0.5).
pub fn anomaly_score(bb_z: f64, bb_dev: f64) -> f64 {
    0.5 * (1.0 - (bb_z / bb_dev).tanh())
}

/// Convex combination of the momentum and anomaly scores.
pub fn composite_score(m: f64, a: f64, w_mom: f64) -> f64 {
    w_mom * m + (1.0 - w_mom) * a
}

/// Baseline entry threshold in composite-score units.
///
/// The configured `ema_threshold` lives in EMA-spread units; it is mapped
/// through the same tanh squash as the momentum score so that threshold
/// and score are commensurable.
pub fn base_threshold(params: &StrategyParams) -> f64 {
    0.5 * (1.0 + (params.ema_threshold / params.theta_momentum).tanh())
}

/// Effective long/short entry thresholds under the soft funding bias.
///
/// The side adverse to the prevailing funding sign (longs when `fr > 0`,
/// shorts when `fr < 0`) has its threshold raised by
/// `kappa * max(|fr| - thr_bps/10000, 0)`, capped at 1, where `kappa` is
/// the configured per-bp slope converted to per-decimal units.
pub fn effective_thresholds(fr_t: f64, params: &StrategyParams) -> (f64, f64) {
    let tau_base = base_threshold(params);
    if !params.funding_gates_enabled {
        return (tau_base, tau_base);
    }
    let kappa = params.funding_bias_k_thr_per_bps * 10_000.0;
    let excess = (fr_t.abs() - params.funding_bias_thr_bps / 10_000.0).max(0.0);
    let bump = (kappa * excess).min(1.0);
    let tau_long = if fr_t > 0.0 {
        (tau_base + bump).min(1.0)
    } else {
        tau_base
    };
    let tau_short = if fr_t < 0.0 {
        (tau_base + bump).min(1.0)
    } else {
        tau_base
    };
    (tau_long, tau_short)
}

/// Streaming indicator state over closes.
struct IndicatorState {
    ema_fast: Ema,
    ema_slow: Ema,
    closes: Vec<f64>,
    bb_period: usize,
    atr: Option<Atr>,
    warmup: usize,
    seen: usize,
}

struct Ema {
    alpha: f64,
    value: Option<f64>,
}

impl Ema {
    fn new(span: u32) -> Self {
        Self {
            alpha: 2.0 / (span as f64 + 1.0),
            value: None,
        }
    }

    fn update(&mut self, close: f64) -> f64 {
        let next = match self.value {
            None => close,
            Some(prev) => prev + self.alpha * (close - prev),
        };
        self.value = Some(next);
        next
    }
}

struct Atr {
    period: usize,
    seed: Vec<f64>,
    value: Option<f64>,
    prev_close: Option<f64>,
}

impl Atr {
    fn new(period: u32) -> Self {
        Self {
            period: period as usize,
            seed: Vec::new(),
            value: None,
            prev_close: None,
        }
    }

    fn update(&mut self, high: f64, low: f64, close: f64) -> f64 {
        let tr = match self.prev_close {
            None => high - low,
            Some(pc) => (high - low).max((high - pc).abs()).max((low - pc).abs()),
        };
        self.prev_close = Some(close);
        match self.value {
            Some(prev) => {
                let next = (prev * (self.period as f64 - 1.0) + tr) / self.period as f64;
                self.value = Some(next);
                next
            }
            None => {
                self.seed.push(tr);
                if self.seed.len() >= self.period {
                    let mean = self.seed.iter().sum::<f64>() / self.seed.len() as f64;
                    self.value = Some(mean);
                    mean
                } else {
                    tr
                }
            }
        }
    }
}

impl IndicatorState {
    fn new(params: &StrategyParams) -> Self {
        Self {
            ema_fast: Ema::new(params.ema_fast),
            ema_slow: Ema::new(params.ema_slow),
            closes: Vec::new(),
            bb_period: params.bb_period as usize,
            atr: (params.atr_period > 0).then(|| Atr::new(params.atr_period)),
            warmup: params.warmup_bars(),
            seen: 0,
        }
    }

    fn update(&mut self, high: f64, low: f64, close: f64) -> IndicatorSnapshot {
        let ema_fast_val = self.ema_fast.update(close);
        let ema_slow_val = self.ema_slow.update(close);
        self.closes.push(close);
        self.seen += 1;

        let bb_z = if self.closes.len() >= self.bb_period {
            let window = &self.closes[self.closes.len() - self.bb_period..];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            let var =
                window.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / window.len() as f64;
            let std = var.sqrt();
            if std > 0.0 {
                (close - mean) / std
            } else {
                0.0
            }
        } else {
            0.0
        };

        let atr_val = match &mut self.atr {
            Some(atr) => atr.update(high, low, close),
            None => 0.0,
        };

        IndicatorSnapshot {
            ema_fast_val,
            ema_slow_val,
            bb_z,
            atr_val,
            ready: self.seen >= self.warmup,
        }
    }
}

/// Directional signal sequence in {-1, 0, +1}, one entry per bar.
///
/// Signals are decided at bar close from that bar's indicators, aligned
/// funding and the causal risk-control state: minimum holding blocks
/// voluntary exits and flips, a cooldown blocks re-entries after exits,
/// and ATR stop / take-profit levels (measured from the entry close
/// against the entry-time ATR) force an exit regardless of holding time.
/// Warm-up bars emit 0.
pub fn generate_signals(
    series: &BarSeries,
    aligned_funding: &[f64],
    params: &StrategyParams,
) -> Result<Vec<i8>, SignalError> {
    params.validate()?;
    let bars = series.bars();
    if aligned_funding.len() != bars.len() {
        return Err(SignalError::FundingLengthMismatch {
            funding: aligned_funding.len(),
            bars: bars.len(),
        });
    }

    let freq_hours = series.freq_hours() as f64;
    let mut state = IndicatorState::new(params);
    let mut signals = vec![0i8; bars.len()];

    let mut pos: i8 = 0;
    let mut entry_idx = 0usize;
    let mut entry_close = 0.0f64;
    let mut entry_atr = 0.0f64;
    let mut last_exit_idx: Option<usize> = None;

    for (t, bar) in bars.iter().enumerate() {
        let snap = state.update(bar.high, bar.low, bar.close);
        if !snap.ready {
            // Indicators still warming up; stay flat.
            signals[t] = 0;
            continue;
        }

        let m = momentum_score(snap.ema_fast_val, snap.ema_slow_val, params.theta_momentum);
        let a = anomaly_score(snap.bb_z, params.bb_dev);
        let c = composite_score(m, a, params.w_mom);
        let (tau_long, tau_short) = effective_thresholds(aligned_funding[t], params);

        let want: i8 = if c >= tau_long {
            1
        } else if c <= 1.0 - tau_short {
            -1
        } else {
            0
        };

        let cooldown_ok = |idx: usize, exit: Option<usize>| -> bool {
            match exit {
                None => true,
                Some(e) => (idx - e) as f64 * freq_hours >= params.cooldown_hours,
            }
        };

        if pos != 0 {
            // ATR exits bypass the minimum-hold constraint.
            let mut forced_exit = false;
            if params.atr_period > 0 && entry_atr > 0.0 {
                let excursion = (bar.close - entry_close) * pos as f64;
                if params.atr_k_sl > 0.0 && -excursion > params.atr_k_sl * entry_atr {
                    forced_exit = true;
                }
                if params.atr_k_tp > 0.0 && excursion > params.atr_k_tp * entry_atr {
                    forced_exit = true;
                }
            }
            if forced_exit {
                pos = 0;
                last_exit_idx = Some(t);
            } else if t - entry_idx < params.min_hold_bars as usize {
                // Holding period not yet elapsed: keep the position.
            } else if want != pos {
                if want == 0 {
                    pos = 0;
                    last_exit_idx = Some(t);
                } else {
                    // Flip: exit plus immediate opposite entry, gated by
                    // the cooldown (a nonzero cooldown forces a flat bar).
                    if params.cooldown_hours == 0.0 {
                        pos = want;
                        entry_idx = t;
                        entry_close = bar.close;
                        entry_atr = snap.atr_val;
                    } else {
                        pos = 0;
                        last_exit_idx = Some(t);
                    }
                }
            }
        } else if want != 0 && cooldown_ok(t, last_exit_idx) {
            pos = want;
            entry_idx = t;
            entry_close = bar.close;
            entry_atr = snap.atr_val;
        }

        signals[t] = pos;
    }

    Ok(signals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{Bar, BarSeries};
    use chrono::{TimeZone, Utc};

    fn series_from_closes(closes: &[f64]) -> BarSeries {
        let bars: Vec<Bar> = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Bar {
                ts: Utc.timestamp_opt(i as i64 * 4 * 3600, 0).single().unwrap(),
                open: c,
                high: c * 1.0005,
                low: c * 0.9995,
                close: c,
                volume: 1.0,
            })
            .collect();
        BarSeries::new(bars, 4).unwrap()
    }

    #[test]
    fn momentum_score_is_half_when_emas_equal() {
        assert_eq!(momentum_score(100.0, 100.0, 0.01), 0.5);
    }

    #[test]
    fn momentum_score_saturates() {
        assert!(momentum_score(200.0, 100.0, 0.01) > 0.999);
        assert!(momentum_score(50.0, 100.0, 0.01) < 0.001);
    }

    #[test]
    fn momentum_score_scalar_evaluation() {
        let m = momentum_score(101.0, 100.0, 0.01);
        assert!((m - 0.5 * (1.0 + 1.0f64.tanh())).abs() < 1e-15);
        assert!((m - 0.88080).abs() < 5e-6);
    }

    #[test]
    fn anomaly_score_symmetry_and_saturation() {
        assert_eq!(anomaly_score(0.0, 2.0), 0.5);
        assert!(anomaly_score(50.0, 2.0) < 0.001);
        let a = anomaly_score(-2.0, 2.0);
        assert!((a - 0.5 * (1.0 + 1.0f64.tanh())).abs() < 1e-15);
    }

    #[test]
    fn composite_weight_collapse() {
        assert_eq!(composite_score(0.8, 0.3, 1.0), 0.8);
        assert_eq!(composite_score(0.8, 0.3, 0.0), 0.3);
        assert!((composite_score(0.8, 0.5, 0.6) - 0.68).abs() < 1e-15);
    }

    #[test]
    fn thresholds_with_zero_slope_stay_at_base() {
        let params = StrategyParams {
            funding_bias_thr_bps: 5.0,
            funding_bias_k_thr_per_bps: 0.0,
            ..StrategyParams::default()
        };
        let tau_base = base_threshold(&params);
        for fr in [-0.01, 0.0, 0.0007, 0.01] {
            assert_eq!(effective_thresholds(fr, &params), (tau_base, tau_base));
        }
    }

    #[test]
    fn thresholds_at_exact_activation_point() {
        let params = StrategyParams {
            funding_bias_thr_bps: 5.0,
            funding_bias_k_thr_per_bps: 0.005,
            ..StrategyParams::default()
        };
        let tau_base = base_threshold(&params);
        let (tau_long, _) = effective_thresholds(0.0005, &params);
        assert_eq!(tau_long, tau_base);
    }

    #[test]
    fn threshold_bump_unit_conversion() {
        let params = StrategyParams {
            funding_bias_thr_bps: 5.0,
            funding_bias_k_thr_per_bps: 0.005,
            ..StrategyParams::default()
        };
        let tau_base = base_threshold(&params);
        let (tau_long, tau_short) = effective_thresholds(0.0007, &params);
        assert!((tau_long - tau_base - 0.01).abs() < 1e-12);
        assert_eq!(tau_short, tau_base);
        // Symmetric on the short side under negative funding.
        let (tl, ts) = effective_thresholds(-0.0007, &params);
        assert_eq!(tl, tau_base);
        assert!((ts - tau_base - 0.01).abs() < 1e-12);
    }

    #[test]
    fn constant_prices_stay_flat() {
        let series = series_from_closes(&[100.0; 80]);
        let funding = vec![0.0; 80];
        let signals = generate_signals(&series, &funding, &StrategyParams::default()).unwrap();
        assert!(signals.iter().all(|&s| s == 0));
    }

    #[test]
    fn uptrend_goes_long_and_stays() {
        let closes: Vec<f64> = (0..120).map(|i| 100.0 * 1.01f64.powi(i)).collect();
        let series = series_from_closes(&closes);
        let funding = vec![0.0; closes.len()];
        let params = StrategyParams {
            ema_threshold: 0.0005,
            min_hold_bars: 2,
            ..StrategyParams::default()
        };
        let signals = generate_signals(&series, &funding, &params).unwrap();
        let warmup = params.warmup_bars();
        assert!(signals[warmup..].contains(&1));
        let first_long = signals.iter().position(|&s| s == 1).unwrap();
        assert!(signals[first_long..].iter().all(|&s| s == 1));
    }

    #[test]
    fn gate_toggle_is_inert_at_zero_funding() {
        let closes: Vec<f64> = (0..100)
            .map(|i| 100.0 + 10.0 * ((i as f64) * 0.21).sin())
            .collect();
        let series = series_from_closes(&closes);
        let funding = vec![0.0; closes.len()];
        let gated = StrategyParams {
            funding_bias_thr_bps: 5.0,
            funding_bias_k_thr_per_bps: 0.003,
            funding_gates_enabled: true,
            ..StrategyParams::default()
        };
        let ungated = StrategyParams {
            funding_gates_enabled: false,
            ..gated.clone()
        };
        assert_eq!(
            generate_signals(&series, &funding, &gated).unwrap(),
            generate_signals(&series, &funding, &ungated).unwrap()
        );
    }

    #[test]
    fn min_hold_floor_on_run_lengths() {
        let closes: Vec<f64> = (0..200)
            .map(|i| 100.0 * (1.0 + 0.03 * ((i as f64) * 0.35).sin()))
            .collect();
        let series = series_from_closes(&closes);
        let funding = vec![0.0; closes.len()];
        let params = StrategyParams {
            ema_threshold: 0.0005,
            min_hold_bars: 4,
            ..StrategyParams::default()
        };
        let signals = generate_signals(&series, &funding, &params).unwrap();
        let mut run = 0usize;
        let mut prev = 0i8;
        for (i, &s) in signals.iter().enumerate() {
            if s != 0 && s == prev {
                run += 1;
            } else {
                if prev != 0 && i < signals.len() {
                    assert!(run >= 4, "run of {run} bars ended at {i}");
                }
                run = usize::from(s != 0);
            }
            prev = s;
        }
    }

    #[test]
    fn params_bounds_are_enforced() {
        let bad = StrategyParams {
            ema_fast: 40,
            ..StrategyParams::default()
        };
        assert!(bad.validate().is_err());
        let inverted = StrategyParams {
            ema_fast: 30,
            ema_slow: 25,
            ..StrategyParams::default()
        };
        assert!(matches!(
            inverted.validate(),
            Err(SignalError::EmaOrder { .. })
        ));
        assert!(StrategyParams::default().validate().is_ok());
    }
}
