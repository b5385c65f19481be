//! Overfitting and robustness diagnostics over backtest outputs: deflated
//! Sharpe, CSCV/PBO, paired moving-block bootstrap, cost and funding-gate
//! ablations, execution-semantics uplift and the drawdown-bucket overlay.
//!
//! Everything here is pure given its inputs; Monte-Carlo loops derive
//! per-task seeds so results never depend on evaluation order.

mod ablation;
mod bootstrap;
mod dsr;
mod overlay;
mod pbo;

pub use ablation::{
    cost_ablation, funding_gate_ablation, semantics_uplift, CostLadderReport, GateAblationReport,
    LadderVariant, UpliftReport,
};
pub use bootstrap::{block_bootstrap_ci, BootstrapCi};
pub use dsr::{deflated_sharpe, expected_max_sharpe, EULER_MASCHERONI};
pub use overlay::{dd_bucket_overlay, DdBucketPolicy};
pub use pbo::{cscv_pbo, PboResult};

use crate::engine::EngineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("return matrix must be rectangular and finite")]
    MalformedMatrix,

    #[error("return matrix needs at least 2 candidates, got {0}")]
    TooFewCandidates(usize),

    #[error("segment count must be an even number >= 2, got {0}")]
    SegmentsNotEven(usize),

    #[error("{cols} columns not divisible into {segments} equal segments")]
    ColumnsNotDivisible { cols: usize, segments: usize },

    #[error("series lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("block length {block} invalid for series of length {len}")]
    BadBlockLength { block: usize, len: usize },

    #[error("bootstrap replicate count must be >= 1")]
    ZeroBoot,

    #[error("confidence level {0} outside (0, 1)")]
    BadLevel(f64),

    #[error("deflated Sharpe denominator {0} <= 0 (skew/kurtosis combination undefined)")]
    DsrDenominator(f64),

    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),

    #[error("trial count must be >= 1")]
    ZeroTrials,

    #[error("trial Sharpe variance must be >= 0 and finite, got {0}")]
    BadTrialVariance(f64),

    #[error("invalid drawdown-bucket policy: {0}")]
    BadPolicy(String),

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Rectangular candidate x time-segment return matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    candidate_ids: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl ReturnMatrix {
    pub fn new(candidate_ids: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self, DiagnosticsError> {
        if rows.is_empty() || candidate_ids.len() != rows.len() {
            return Err(DiagnosticsError::MalformedMatrix);
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(DiagnosticsError::MalformedMatrix);
        }
        for row in &rows {
            if row.len() != width || row.iter().any(|v| !v.is_finite()) {
                return Err(DiagnosticsError::MalformedMatrix);
            }
        }
        Ok(Self {
            candidate_ids,
            rows,
        })
    }

    pub fn n_candidates(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.rows[0].len()
    }

    pub fn candidate_ids(&self) -> &[usize] {
        &self.candidate_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

/// Population skewness (third standardized moment).
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if m2 == 0.0 {
        return 0.0;
    }
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Population kurtosis (fourth standardized moment, 3 for a normal).
pub fn kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 3.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if m2 == 0.0 {
        return 3.0;
    }
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

/// Linear-interpolation percentile of a sorted slice, p in [0, 1].
pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}
