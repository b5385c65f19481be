//! Run configuration: one JSON file fully specifies a run, and its
//! content digest is the run id every artifact traces back to.

use chrono::{DateTime, Utc};
use perpbt_core::audit::GuardConfig;
use perpbt_core::costs::CostProfile;
use perpbt_core::diagnostics::DdBucketPolicy;
use perpbt_core::marketdata::{SyntheticFundingSettings, WindowSpec};
use perpbt_core::seeds::digest_json;
use perpbt_core::signal::StrategyParams;
use perpbt_core::synth::SynthSeriesConfig;
use perpbt_core::tuner::{ParamSpace, SamplerKind, TpeConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{usage, CliError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub ohlcv_csv: PathBuf,
    #[serde(default)]
    pub funding_csv: Option<PathBuf>,
    #[serde(default = "default_freq_hours")]
    pub freq_hours: u32,
    #[serde(default)]
    pub gap_tolerance: usize,
}

fn default_freq_hours() -> u32 {
    4
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SynthConfig {
    pub series: SynthSeriesConfig,
    #[serde(default)]
    pub funding: SyntheticFundingSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DsrConfig {
    #[serde(default = "default_n_trials")]
    pub n_trials: usize,
    #[serde(default = "default_sr_variance")]
    pub sr_variance: f64,
}

fn default_n_trials() -> usize {
    360
}

fn default_sr_variance() -> f64 {
    1.0
}

impl Default for DsrConfig {
    fn default() -> Self {
        Self {
            n_trials: default_n_trials(),
            sr_variance: default_sr_variance(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub candidate_a: usize,
    pub candidate_b: usize,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_block_len() -> usize {
    3
}

fn default_n_boot() -> usize {
    2000
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PboConfig {
    #[serde(default = "default_n_segments")]
    pub n_segments: usize,
}

fn default_n_segments() -> usize {
    8
}

impl Default for PboConfig {
    fn default() -> Self {
        Self {
            n_segments: default_n_segments(),
        }
    }
}

/// Rolling-window robustness stream (report-only; the stable filter
/// consumes scenario aggregates).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RollingConfig {
    #[serde(default = "default_roll_win")]
    pub win: usize,
    #[serde(default = "default_roll_step")]
    pub step: usize,
}

fn default_roll_win() -> usize {
    2000
}

fn default_roll_step() -> usize {
    500
}

/// Everything a run needs; digesting the (canonicalized) file yields the
/// run id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub asset: String,
    pub data: DataConfig,
    #[serde(default)]
    pub windows: Vec<WindowSpec>,
    #[serde(default)]
    pub params: Option<StrategyParams>,
    #[serde(default)]
    pub space: Option<ParamSpace>,
    #[serde(default)]
    pub profile: CostProfile,
    #[serde(default)]
    pub stable_policy: Option<perpbt_core::screening::StablePolicy>,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    #[serde(default)]
    pub tpe: Option<TpeConfig>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rf_annual")]
    pub rf_annual: f64,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub guard: Option<GuardConfig>,
    #[serde(default)]
    pub dd_buckets: Option<DdBucketPolicy>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub dsr: Option<DsrConfig>,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default)]
    pub pbo: Option<PboConfig>,
    #[serde(default)]
    pub rolling: Option<RollingConfig>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Tpe
}

fn default_budget() -> usize {
    40
}

fn default_rf_annual() -> f64 {
    0.03
}

fn default_pool_size() -> usize {
    40
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&raw)
            .map_err(|e| usage(format!("cannot parse config {}: {e}", path.display())))?;
        for window in &config.windows {
            if window.start >= window.end {
                return Err(usage(format!("window `{}` has start >= end", window.name)));
            }
        }
        if let Some(params) = &config.params {
            params
                .validate()
                .map_err(|e| usage(format!("params: {e}")))?;
        }
        config
            .profile
            .validate()
            .map_err(|e| usage(format!("profile: {e}")))?;
        Ok(config)
    }

    /// Content digest of the canonicalized config.
    pub fn run_id(&self) -> String {
        digest_json(self)[..12].to_string()
    }

    /// Select a window: explicit flag first, then preferred names, then a
    /// single configured window; an empty window list is an error unless
    /// the caller accepts the full data range.
    pub fn pick_window(
        &self,
        flag: Option<&str>,
        preferred: &[&str],
    ) -> Result<Option<WindowSpec>, CliError> {
        if let Some(name) = flag {
            return self
                .windows
                .iter()
                .find(|w| w.name == name)
                .cloned()
                .map(Some)
                .ok_or_else(|| usage(format!("no window named `{name}` in config")));
        }
        for name in preferred {
            if let Some(window) = self.windows.iter().find(|w| &w.name == name) {
                return Ok(Some(window.clone()));
            }
        }
        if self.windows.len() == 1 {
            return Ok(Some(self.windows[0].clone()));
        }
        if self.windows.is_empty() {
            return Ok(None); // caller falls back to the full data range
        }
        Err(usage(format!(
            "ambiguous window selection; pass --window (have: {})",
            self.windows
                .iter()
                .map(|w| w.name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }
}

/// The config.json artifact: the canonical config plus provenance, with
/// the generation timestamp as the single non-reproducible field.
#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigArtifact {
    pub run_id: String,
    pub generated_at: DateTime<Utc>,
    pub config: RunConfig,
}
