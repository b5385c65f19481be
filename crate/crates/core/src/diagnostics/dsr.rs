//! Normal-approximation deflated Sharpe ratio.
//!
//! The benchmark Sharpe is the expected maximum of `n_trials` null
//! Sharpes with the given cross-trial variance; the deflated value is the
//! probability that the observed Sharpe exceeds that benchmark after a
//! skewness/kurtosis correction. Sharpe inputs are annualized and
//! converted to per-period units internally.

use super::DiagnosticsError;
use statrs::distribution::{ContinuousCDF, Normal};

pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Expected maximum Sharpe under the multiple-trial null, in the same
/// (annualized) units as the cross-trial variance. One trial means no
/// selection effect, so the benchmark is 0.
pub fn expected_max_sharpe(
    n_trials: usize,
    sr_variance_across_trials: f64,
) -> Result<f64, DiagnosticsError> {
    if n_trials == 0 {
        return Err(DiagnosticsError::ZeroTrials);
    }
    if !sr_variance_across_trials.is_finite() || sr_variance_across_trials < 0.0 {
        return Err(DiagnosticsError::BadTrialVariance(
            sr_variance_across_trials,
        ));
    }
    if n_trials == 1 {
        return Ok(0.0);
    }
    let n = n_trials as f64;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z1 = std_normal.inverse_cdf(1.0 - 1.0 / n);
    let z2 = std_normal.inverse_cdf(1.0 - 1.0 / (n * std::f64::consts::E));
    Ok(sr_variance_across_trials.sqrt() * ((1.0 - EULER_MASCHERONI) * z1 + EULER_MASCHERONI * z2))
}

/// Probability that the observed Sharpe beats the expected-max benchmark.
///
/// `sr_hat` and the cross-trial variance are annualized; `periods_per_year`
/// converts both to per-period units before the statistic. `kurtosis` is
/// the full fourth standardized moment (3 for a normal).
pub fn deflated_sharpe(
    sr_hat: f64,
    n_obs: usize,
    skew: f64,
    kurtosis: f64,
    n_trials: usize,
    sr_variance_across_trials: f64,
    periods_per_year: f64,
) -> Result<f64, DiagnosticsError> {
    if n_obs < 2 {
        return Err(DiagnosticsError::TooFewObservations(n_obs));
    }
    let sr0 = expected_max_sharpe(n_trials, sr_variance_across_trials)?;
    let scale = periods_per_year.sqrt();
    let sr_p = sr_hat / scale;
    let sr0_p = sr0 / scale;
    let denom = 1.0 - skew * sr_p + ((kurtosis - 1.0) / 4.0) * sr_p * sr_p;
    if denom <= 0.0 {
        return Err(DiagnosticsError::DsrDenominator(denom));
    }
    let stat = (sr_p - sr0_p) * ((n_obs - 1) as f64).sqrt() / denom.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(std_normal.cdf(stat))
}
