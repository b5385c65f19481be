//! `perpbt` — deterministic backtest, tune, screen, diagnose and audit
//! pipeline over fixed-frequency OHLCV and funding series.
//!
//! Exit codes: 0 success, 1 usage error, 2 fatal data validation,
//! 3 numerical/contract failure.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use commands::Context;
use config::RunConfig;
use error::{usage, CliError};
use perpbt_core::engine::ExecutionSemantics;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "perpbt",
    version,
    about = "Execution-strict perpetual-futures backtesting and configuration-selection pipeline"
)]
struct Cli {
    /// Run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: runs/<run_id> or config.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Window name from the config window list.
    #[arg(long, global = true)]
    window: Option<String>,

    /// Cost scenario label (baseline, fee4_fund1, funding_off, ...).
    #[arg(long, global = true)]
    scenario: Option<String>,

    /// Execution semantics: strict (t+1) or naive (t+0 diagnostic).
    #[arg(long, global = true, value_parser = parse_semantics)]
    semantics: Option<ExecutionSemantics>,

    #[command(subcommand)]
    command: Command,
}

fn parse_semantics(raw: &str) -> Result<ExecutionSemantics, String> {
    match raw {
        "strict" | "strict_t1" => Ok(ExecutionSemantics::StrictT1),
        "naive" | "naive_t0" => Ok(ExecutionSemantics::NaiveT0),
        other => Err(format!("unknown semantics `{other}` (strict|naive)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Data continuity and sanity checks; exit 2 on fatal data.
    Validate,
    /// Single backtest: ledger + metrics artifacts.
    Backtest,
    /// Stage I search: study.csv and best_so_far.csv.
    Tune,
    /// Stage II screening of a frozen study pool across the scenario grid.
    Screen {
        /// Study CSV (default: `<out>/study.csv`).
        #[arg(long)]
        study: Option<PathBuf>,
    },
    /// Threshold-sensitivity scan of the stable-candidate policy.
    Scan {
        #[arg(long)]
        study: Option<PathBuf>,
    },
    /// Overfitting and robustness diagnostics.
    Diagnose {
        #[command(subcommand)]
        kind: DiagnoseKind,
    },
    /// Replay reconciliation against a reference ledger.
    Audit {
        /// Reference ledger CSV produced by `backtest`.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Guard decision stream over a ledger CSV.
    Guard {
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Generate synthetic OHLCV (and funding) into the config data paths.
    Synth,
}

#[derive(Subcommand)]
enum DiagnoseKind {
    /// Deflated Sharpe ratio of the configured params.
    Dsr,
    /// CSCV probability of backtest overfitting over the study pool.
    Pbo {
        #[arg(long)]
        study: Option<PathBuf>,
    },
    /// Paired moving-block bootstrap CI between two study trials.
    Bootstrap {
        #[arg(long)]
        study: Option<PathBuf>,
    },
    /// Cost ladder and funding-gate ablations.
    Ablation {
        /// Relax leverage/notional caps in the zero-cost rung.
        #[arg(long, default_value_t = false)]
        relax_caps: bool,
    },
    /// Batch strict-vs-naive execution uplift over the study pool.
    Semantics {
        #[arg(long)]
        study: Option<PathBuf>,
    },
    /// Drawdown-bucket exposure overlay.
    Ddbucket,
}

fn real_main() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap prints its own rich message; keep ours terse.
        usage(e.to_string())
    })?;
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| usage("--config <path> is required"))?;
    let config = RunConfig::load(config_path)?;
    let ctx = Context::new(
        config,
        cli.out,
        cli.seed,
        cli.window,
        cli.scenario,
        cli.semantics,
    )?;

    match cli.command {
        Command::Validate => commands::cmd_validate(&ctx),
        Command::Backtest => commands::cmd_backtest(&ctx),
        Command::Tune => commands::cmd_tune(&ctx),
        Command::Screen { study } => commands::cmd_screen(&ctx, study),
        Command::Scan { study } => commands::cmd_threshold_scan(&ctx, study),
        Command::Diagnose { kind } => match kind {
            DiagnoseKind::Dsr => commands::cmd_diagnose_dsr(&ctx),
            DiagnoseKind::Pbo { study } => commands::cmd_diagnose_pbo(&ctx, study),
            DiagnoseKind::Bootstrap { study } => commands::cmd_diagnose_bootstrap(&ctx, study),
            DiagnoseKind::Ablation { relax_caps } => {
                commands::cmd_diagnose_ablation(&ctx, relax_caps)
            }
            DiagnoseKind::Semantics { study } => commands::cmd_diagnose_semantics(&ctx, study),
            DiagnoseKind::Ddbucket => commands::cmd_diagnose_ddbucket(&ctx),
        },
        Command::Audit {
            reference,
            tolerance,
        } => commands::cmd_audit(&ctx, &reference, tolerance),
        Command::Guard { ledger } => commands::cmd_guard(&ctx, &ledger),
        Command::Synth => commands::cmd_synth(&ctx),
    }
}

fn main() {
    // Die quietly when stdout is a closed pipe (e.g. `perpbt ... | head`)
    // instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match real_main() {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
