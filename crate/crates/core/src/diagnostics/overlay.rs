//! Drawdown-bucket exposure overlay.
//!
//! Re-derives a ledger with exposure (and proportionally all turnover
//! costs and funding) scaled by a factor chosen from the overlay's own
//! net-equity drawdown as of the previous bar. The causal loop is
//! self-consistent: bar `t`'s scale never sees bar `t`'s return.

use super::DiagnosticsError;
use crate::engine::{BacktestResult, LedgerRow};
use serde::{Deserialize, Serialize};

/// Bucket boundaries (drawdown fractions, strictly increasing) and one
/// exposure scale per bucket, `scales.len() == boundaries.len() + 1`.
///
/// Drawdown `d` selects bucket `i` where `boundaries[i-1] <= d <
/// boundaries[i]`, with the open-ended last bucket above the final
/// boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdBucketPolicy {
    pub boundaries: Vec<f64>,
    pub scales: Vec<f64>,
}

impl DdBucketPolicy {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if self.scales.len() != self.boundaries.len() + 1 {
            return Err(DiagnosticsError::BadPolicy(format!(
                "need {} scales for {} boundaries",
                self.boundaries.len() + 1,
                self.boundaries.len()
            )));
        }
        for pair in self.boundaries.windows(2) {
            if pair[1] <= pair[0] {
                return Err(DiagnosticsError::BadPolicy(
                    "boundaries must be strictly increasing".to_string(),
                ));
            }
        }
        for &b in &self.boundaries {
            if !(0.0..=1.0).contains(&b) {
                return Err(DiagnosticsError::BadPolicy(format!(
                    "boundary {b} outside [0, 1]"
                )));
            }
        }
        for &s in &self.scales {
            if !(0.0..=1.0).contains(&s) {
                return Err(DiagnosticsError::BadPolicy(format!(
                    "scale {s} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn scale_for(&self, drawdown: f64) -> f64 {
        for (i, &boundary) in self.boundaries.iter().enumerate() {
            if drawdown < boundary {
                return self.scales[i];
            }
        }
        *self.scales.last().expect("validated policy has scales")
    }
}

/// Applies the overlay and re-derives the ledger.
///
/// At each bar the drawdown of the overlaid equity curve up to the
/// previous bar selects the bucket; exposure, turnover costs and funding
/// all scale by the bucket factor, and net return is recomputed from the
/// scaled components so the accounting identity still holds exactly.
pub fn dd_bucket_overlay(
    result: &BacktestResult,
    policy: &DdBucketPolicy,
) -> Result<BacktestResult, DiagnosticsError> {
    policy.validate()?;
    let mut rows = Vec::with_capacity(result.rows.len());
    let mut equity = 1.0f64;
    let mut peak = 1.0f64;
    for row in &result.rows {
        let drawdown = if peak > 0.0 {
            (1.0 - equity / peak).max(0.0)
        } else {
            1.0
        };
        let scale = policy.scale_for(drawdown);
        let exposure = row.exposure * scale;
        let r_raw = row.r_raw * scale;
        let c_fee = row.c_fee * scale;
        let c_slip = row.c_slip * scale;
        let c_fund = row.c_fund * scale;
        let r_net = r_raw - c_fee - c_slip - c_fund;
        rows.push(LedgerRow {
            ts: row.ts,
            signal: row.signal,
            exposure,
            r_mkt: row.r_mkt,
            r_raw,
            c_fee,
            c_slip,
            c_fund,
            r_net,
        });
        equity *= 1.0 + r_net;
        if equity < 0.0 {
            equity = 0.0;
        }
        peak = peak.max(equity);
    }
    Ok(BacktestResult {
        rows,
        window: result.window.clone(),
        params_digest: result.params_digest.clone(),
        profile_digest: result.profile_digest.clone(),
        semantics: result.semantics,
    })
}
