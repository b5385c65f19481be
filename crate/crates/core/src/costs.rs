//! Trading-cost model: turnover-based fees and slippage plus funding
//! accrual on held exposure, with the Stage II scenario grid and the
//! pessimistic stress variants.
//!
//! All computations are pure functions over an immutable [`CostProfile`];
//! bps inputs are converted to decimals (/10000) at computation time and
//! stored as bps for config legibility. Execution is pure taker (no maker
//! mixing, no rebates).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("cost profile field `{field}` out of range: {value}")]
    InvalidProfile { field: &'static str, value: f64 },
}

/// Whether funding accrues from the aligned realized series (with the
/// conservative fallback) or is switched off entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FundingMode {
    RealizedWithFallback,
    Off,
}

/// Account, fee, slippage and funding assumptions for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub initial_equity: f64,
    pub max_leverage: f64,
    pub notional_cap: f64,
    pub taker_fee_bps: f64,
    pub base_slippage_bps: f64,
    pub slippage_multiplier: f64,
    pub funding_mode: FundingMode,
    pub funding_multiplier: f64,
    pub fallback_rate_8h: f64,
}

impl Default for CostProfile {
    /// Conservative baseline: 10k equity, 5x leverage, 50k notional cap,
    /// 4 bps taker, 2 bps slippage, realized funding with a 1 bp fallback.
    fn default() -> Self {
        Self {
            initial_equity: 10_000.0,
            max_leverage: 5.0,
            notional_cap: 50_000.0,
            taker_fee_bps: 4.0,
            base_slippage_bps: 2.0,
            slippage_multiplier: 1.0,
            funding_mode: FundingMode::RealizedWithFallback,
            funding_multiplier: 1.0,
            fallback_rate_8h: 0.0001,
        }
    }
}

impl CostProfile {
    pub fn validate(&self) -> Result<(), CostError> {
        let checks: [(&'static str, f64, bool); 7] = [
            (
                "initial_equity",
                self.initial_equity,
                self.initial_equity > 0.0,
            ),
            ("max_leverage", self.max_leverage, self.max_leverage > 0.0),
            ("notional_cap", self.notional_cap, self.notional_cap > 0.0),
            (
                "taker_fee_bps",
                self.taker_fee_bps,
                self.taker_fee_bps >= 0.0,
            ),
            (
                "base_slippage_bps",
                self.base_slippage_bps,
                self.base_slippage_bps >= 0.0,
            ),
            (
                "slippage_multiplier",
                self.slippage_multiplier,
                self.slippage_multiplier >= 0.0,
            ),
            (
                "funding_multiplier",
                self.funding_multiplier,
                self.funding_multiplier >= 0.0,
            ),
        ];
        for (field, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(CostError::InvalidProfile { field, value });
            }
        }
        if !self.fallback_rate_8h.is_finite() {
            return Err(CostError::InvalidProfile {
                field: "fallback_rate_8h",
                value: self.fallback_rate_8h,
            });
        }
        Ok(())
    }

    /// Zero-cost copy (fees, slippage and funding all removed).
    pub fn zero_cost(&self) -> Self {
        Self {
            taker_fee_bps: 0.0,
            base_slippage_bps: 0.0,
            slippage_multiplier: 0.0,
            funding_mode: FundingMode::Off,
            ..self.clone()
        }
    }

    /// Fee-only copy (slippage and funding removed, taker fee kept).
    pub fn fee_only(&self) -> Self {
        Self {
            slippage_multiplier: 0.0,
            funding_mode: FundingMode::Off,
            ..self.clone()
        }
    }
}

/// Per-bar cost components in decimal return units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub fee: f64,
    pub slip: f64,
    /// Signed: positive when the held exposure pays funding, negative
    /// when it receives it.
    pub funding: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.fee + self.slip + self.funding
    }
}

/// One cell of the cost-sensitivity grid: overrides applied on top
/// of a base profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostScenario {
    pub label: String,
    pub taker_fee_bps: f64,
    pub funding_multiplier: f64,
}

impl CostScenario {
    pub fn apply(&self, base: &CostProfile) -> CostProfile {
        CostProfile {
            taker_fee_bps: self.taker_fee_bps,
            funding_multiplier: self.funding_multiplier,
            ..base.clone()
        }
    }
}

/// Fee and slippage on absolute turnover, funding on the exposure held
/// during the bar scaled to the bar length (`bar_hours / 8`).
pub fn bar_costs(
    pos_prev: f64,
    pos: f64,
    fr8h: f64,
    bar_hours: f64,
    profile: &CostProfile,
) -> CostBreakdown {
    let turnover = (pos - pos_prev).abs();
    let fee = turnover * profile.taker_fee_bps / 10_000.0;
    let slip = turnover * (profile.base_slippage_bps / 10_000.0) * profile.slippage_multiplier;
    let funding = match profile.funding_mode {
        FundingMode::Off => 0.0,
        FundingMode::RealizedWithFallback => {
            pos * fr8h * profile.funding_multiplier * (bar_hours / 8.0)
        }
    };
    CostBreakdown { fee, slip, funding }
}

/// The 9-cell sensitivity grid: taker fee in {3, 4, 6} bps crossed with
/// funding multiplier in {0.5, 1.0, 1.5}, fee-major order.
pub fn scenario_grid(base: &CostProfile) -> Vec<CostScenario> {
    let _ = base;
    let fees = [3.0, 4.0, 6.0];
    let fund_mults = [0.5, 1.0, 1.5];
    let mut grid = Vec::with_capacity(9);
    for fee in fees {
        for mult in fund_mults {
            grid.push(CostScenario {
                label: format!("fee{}_fund{}", fee as i64, mult),
                taker_fee_bps: fee,
                funding_multiplier: mult,
            });
        }
    }
    grid
}

/// Stress variants: funding switched off, then fees and slippage doubled
/// and tripled (funding kept as in the base profile).
pub fn stress_variants(base: &CostProfile) -> Vec<(String, CostProfile)> {
    let funding_off = CostProfile {
        funding_mode: FundingMode::Off,
        ..base.clone()
    };
    let pess2 = CostProfile {
        taker_fee_bps: base.taker_fee_bps * 2.0,
        base_slippage_bps: base.base_slippage_bps * 2.0,
        ..base.clone()
    };
    let pess3 = CostProfile {
        taker_fee_bps: base.taker_fee_bps * 3.0,
        base_slippage_bps: base.base_slippage_bps * 3.0,
        ..base.clone()
    };
    vec![
        ("funding_off".to_string(), funding_off),
        ("pess_2x".to_string(), pess2),
        ("pess_3x".to_string(), pess3),
    ]
}
