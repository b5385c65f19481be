//! Deterministic backtesting and configuration-selection toolkit for
//! perpetual-futures strategies on fixed-frequency OHLCV bars.
//!
//! The crate is organized around a strict no-look-ahead execution model:
//! signals are computed at bar close and take effect one bar later, funding
//! is aligned by carry-forward only, and every run produces an auditable
//! per-bar ledger that decomposes net returns into raw return, fee,
//! slippage and funding components.
//!
//! Subsystems:
//! - [`marketdata`]: OHLCV/funding ingestion, validation, resampling,
//!   windowing and funding alignment.
//! - [`costs`]: turnover-based fee/slippage and funding accrual under
//!   configurable cost profiles, scenario grids and stress variants.
//! - [`signal`]: momentum / mean-reversion composite scoring with
//!   funding-biased entry thresholds and causal risk controls.
//! - [`engine`]: the strict t+1 backtest loop, ledger accounting and
//!   performance metrics.
//! - [`tuner`]: TPE and random-search samplers over the strategy
//!   hyperparameter space with reproducible study histories.
//! - [`screening`]: rolling-window and cost-scenario re-evaluation of a
//!   frozen candidate pool plus the stable-candidate filter.
//! - [`diagnostics`]: deflated Sharpe, CSCV/PBO, block bootstrap, cost and
//!   funding-gate ablations, execution-semantics uplift and the
//!   drawdown-bucket exposure overlay.
//! - [`audit`]: replay reconciliation of ledgers and the ok/watch/kill
//!   guard state machine.
//! - [`synth`]: seeded synthetic OHLCV generation for tests and dry runs.

pub mod audit;
pub mod costs;
pub mod diagnostics;
pub mod engine;
pub mod marketdata;
pub mod screening;
pub mod seeds;
pub mod signal;
pub mod synth;
pub mod tuner;

pub use engine::{BacktestResult, ExecutionSemantics, LedgerRow, MetricsSummary};
pub use marketdata::{Bar, BarSeries, FundingSeries, ValidationReport, WindowSpec};
pub use signal::StrategyParams;
