//! Subcommand implementations. Every command loads data through the same
//! validation gate, writes its artifacts under the run directory and
//! prints a short summary table.

use crate::config::{ConfigArtifact, RunConfig};
use crate::error::{contract, fatal_data, usage, CliError};
use chrono::Utc;
use perpbt_core::audit::{
    guard_step, replay_and_audit, write_guard_log_csv, GuardState, ReplayInputs,
};
use perpbt_core::costs::{scenario_grid, stress_variants, CostProfile, CostScenario};
use perpbt_core::diagnostics::{
    block_bootstrap_ci, cost_ablation, cscv_pbo, dd_bucket_overlay, deflated_sharpe,
    funding_gate_ablation, kurtosis, semantics_uplift, skewness, ReturnMatrix,
};
use perpbt_core::engine::{
    metrics, read_ledger_csv, run_backtest, write_ledger_csv, ExecutionSemantics, MetricsSummary,
    ANNUALIZATION_FACTOR,
};
use perpbt_core::marketdata::{
    load_funding_csv, load_ohlcv_csv, synthetic_funding, validate_series, write_funding_csv,
    write_ohlcv_csv, BarSeries, FundingSeries, WindowSpec,
};
use perpbt_core::screening::{
    evaluate_pool, evaluate_rolling_windows, stable_filter, threshold_scan, write_aggregates_csv,
    write_robust_summary_csv, StablePolicy,
};
use perpbt_core::signal::StrategyParams;
use perpbt_core::synth::gen_series;
use perpbt_core::tuner::{
    annual_return_objective, run_study, write_curve_csv, write_study_csv, ParamSpace, TpeConfig,
    Trial,
};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Resolved invocation: config plus global flag overrides.
pub struct Context {
    pub config: RunConfig,
    pub run_id: String,
    pub out_dir: PathBuf,
    pub window_flag: Option<String>,
    pub scenario_flag: Option<String>,
    pub semantics: ExecutionSemantics,
}

impl Context {
    pub fn new(
        mut config: RunConfig,
        out_flag: Option<PathBuf>,
        seed_flag: Option<u64>,
        window_flag: Option<String>,
        scenario_flag: Option<String>,
        semantics: Option<ExecutionSemantics>,
    ) -> Result<Self, CliError> {
        if let Some(seed) = seed_flag {
            config.seed = seed;
        }
        let run_id = config.run_id();
        let out_dir = out_flag
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
        std::fs::create_dir_all(&out_dir)?;
        Ok(Self {
            config,
            run_id,
            out_dir,
            window_flag,
            scenario_flag,
            semantics: semantics.unwrap_or(ExecutionSemantics::StrictT1),
        })
    }

    fn artifact_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            run_id: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        let path = self.artifact_path(name);
        let json = serde_json::to_string_pretty(&Wrapped {
            run_id: &self.run_id,
            body: value,
        })
        .map_err(|e| contract(format!("serialize {name}: {e}")))?;
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }

    /// Writes the provenance artifact; `generated_at` is the only
    /// non-reproducible field in the whole artifact set.
    fn write_config_artifact(&self) -> Result<(), CliError> {
        let artifact = ConfigArtifact {
            run_id: self.run_id.clone(),
            generated_at: Utc::now(),
            config: self.config.clone(),
        };
        let json = serde_json::to_string_pretty(&artifact)
            .map_err(|e| contract(format!("serialize config artifact: {e}")))?;
        std::fs::write(self.artifact_path("config.json"), json + "\n")?;
        Ok(())
    }

    /// Loads and gate-checks the OHLCV series; fatal validation aborts.
    fn load_series(&self) -> Result<BarSeries, CliError> {
        let series = load_ohlcv_csv(&self.config.data.ohlcv_csv, self.config.data.freq_hours)?;
        let report = validate_series(&series, self.config.data.gap_tolerance);
        if report.fatal {
            return Err(fatal_data(format!(
                "{}: {} gaps, {} sanity violations",
                self.config.data.ohlcv_csv.display(),
                report.n_gaps,
                report.sanity_violations.len()
            )));
        }
        Ok(series)
    }

    /// Funding from CSV when configured, otherwise the constant fallback
    /// of the cost profile.
    fn load_funding(&self) -> Result<FundingSeries, CliError> {
        match &self.config.data.funding_csv {
            Some(path) => Ok(load_funding_csv(
                path,
                self.config.profile.fallback_rate_8h,
            )?),
            None => Ok(FundingSeries::constant_fallback(
                self.config.profile.fallback_rate_8h,
            )?),
        }
    }

    fn window_or_full(
        &self,
        series: &BarSeries,
        preferred: &[&str],
    ) -> Result<WindowSpec, CliError> {
        match self
            .config
            .pick_window(self.window_flag.as_deref(), preferred)?
        {
            Some(window) => Ok(window),
            None => Ok(series.full_window("full")),
        }
    }

    fn params(&self) -> Result<StrategyParams, CliError> {
        self.config
            .params
            .clone()
            .ok_or_else(|| usage("config has no `params` section"))
    }

    /// Applies the --scenario flag: a grid label, a stress label or
    /// `baseline`.
    fn scenario_profile(&self) -> Result<(String, CostProfile), CliError> {
        let base = self.config.profile.clone();
        let label = match self.scenario_flag.as_deref() {
            None | Some("baseline") => return Ok(("baseline".to_string(), base)),
            Some(label) => label,
        };
        if let Some(scenario) = scenario_grid(&base).iter().find(|s| s.label == label) {
            return Ok((label.to_string(), scenario.apply(&base)));
        }
        if let Some((name, profile)) = stress_variants(&base).into_iter().find(|(n, _)| n == label)
        {
            return Ok((name, profile));
        }
        Err(usage(format!("unknown scenario `{label}`")))
    }

    fn stable_policy(&self) -> StablePolicy {
        self.config.stable_policy.clone().unwrap_or_default()
    }

    fn tpe(&self) -> TpeConfig {
        self.config.tpe.unwrap_or_default()
    }

    fn space(&self) -> ParamSpace {
        self.config.space.clone().unwrap_or_default()
    }
}

fn print_metrics(label: &str, m: &MetricsSummary) {
    println!(
        "{label:<24} ann={:>9.4} sharpe={:>8.3} maxDD={:>7.4} monthly={:>8.5} trades={} switch={}",
        m.ann_return,
        m.sharpe,
        m.max_dd,
        m.monthly_geom,
        m.trades.map_or("-".to_string(), |t| t.to_string()),
        m.switch_density
            .map_or("-".to_string(), |s| format!("{s:.4}")),
    );
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

pub fn cmd_validate(ctx: &Context) -> Result<(), CliError> {
    let series = load_ohlcv_csv(&ctx.config.data.ohlcv_csv, ctx.config.data.freq_hours)?;
    let report = validate_series(&series, ctx.config.data.gap_tolerance);
    ctx.write_config_artifact()?;
    ctx.write_json("validation_report.json", &report)?;
    println!(
        "validate {}: {} bars, {} gaps, {} sanity violations, fatal={}",
        ctx.config.asset,
        report.n_bars,
        report.n_gaps,
        report.sanity_violations.len(),
        report.fatal
    );
    if report.fatal {
        return Err(fatal_data(format!(
            "{} gaps and {} sanity violations exceed tolerance {}",
            report.n_gaps,
            report.sanity_violations.len(),
            ctx.config.data.gap_tolerance
        )));
    }
    Ok(())
}

pub fn cmd_backtest(ctx: &Context) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let params = ctx.params()?;
    let window = ctx.window_or_full(&series, &["full"])?;
    let (scenario_label, profile) = ctx.scenario_profile()?;
    let result = run_backtest(&series, &funding, &params, &profile, &window, ctx.semantics)?;
    let summary = metrics(&result, ctx.config.rf_annual)?;

    ctx.write_config_artifact()?;
    let ledger_name = format!("ledger_{}_{}.csv", window.name, scenario_label);
    let mut buf = Vec::new();
    write_ledger_csv(&result.rows, Some(&ctx.run_id), &mut buf)
        .map_err(|e| contract(e.to_string()))?;
    std::fs::write(ctx.artifact_path(&ledger_name), buf)?;
    ctx.write_json(
        &format!("metrics_{}_{}.json", window.name, scenario_label),
        &summary,
    )?;

    println!(
        "backtest {} window={} scenario={} semantics={} bars={}",
        ctx.config.asset,
        window.name,
        scenario_label,
        result.semantics,
        result.rows.len()
    );
    print_metrics("strategy", &summary);
    Ok(())
}

pub fn cmd_tune(ctx: &Context) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let window = ctx.window_or_full(&series, &["training"])?;
    let space = ctx.space();
    let objective = annual_return_objective(
        &series,
        &funding,
        &ctx.config.profile,
        &window,
        ctx.config.rf_annual,
    );
    let history = run_study(
        objective,
        &space,
        ctx.config.budget,
        ctx.config.sampler,
        &ctx.tpe(),
        ctx.config.seed,
    )?;

    ctx.write_config_artifact()?;
    let mut study_buf = Vec::new();
    write_study_csv(&history, Some(&ctx.run_id), &mut study_buf)?;
    std::fs::write(ctx.artifact_path("study.csv"), study_buf)?;
    let mut curve_buf = Vec::new();
    write_curve_csv(&history, Some(&ctx.run_id), &mut curve_buf)?;
    std::fs::write(ctx.artifact_path("best_so_far.csv"), curve_buf)?;

    println!(
        "tune {} window={} sampler={:?} budget={} seed={}",
        ctx.config.asset, window.name, ctx.config.sampler, ctx.config.budget, ctx.config.seed
    );
    println!("budget  best_score  best_trial");
    for point in history.best_so_far_curve() {
        println!(
            "{:>6}  {:>10.5}  {:>10}",
            point.budget, point.best_score, point.best_trial_id
        );
    }
    Ok(())
}

/// Reads `trial_id,score,params_json` back into trials.
fn read_study_csv(path: &Path) -> Result<Vec<Trial>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| usage(format!("cannot read study {}: {e}", path.display())))?;
    let mut trials = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| usage(format!("study csv: {e}")))?;
        let id: usize = record[0]
            .parse()
            .map_err(|_| usage(format!("study csv: bad trial_id `{}`", &record[0])))?;
        let score: f64 = record[1]
            .parse()
            .map_err(|_| usage(format!("study csv: bad score `{}`", &record[1])))?;
        let params: StrategyParams = serde_json::from_str(&record[2])
            .map_err(|e| usage(format!("study csv: bad params_json: {e}")))?;
        trials.push(Trial { id, params, score });
    }
    if trials.is_empty() {
        return Err(usage(format!("study {} has no trials", path.display())));
    }
    Ok(trials)
}

/// Frozen top pool by score (descending, id ascending), `pool_size` wide.
fn top_pool(trials: &[Trial], pool_size: usize) -> Vec<Trial> {
    let mut sorted: Vec<Trial> = trials.to_vec();
    sorted.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    sorted.truncate(pool_size);
    sorted
}

pub fn cmd_screen(ctx: &Context, study: Option<PathBuf>) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let window = ctx.window_or_full(&series, &["train_val", "validation"])?;
    let study_path = study.unwrap_or_else(|| ctx.artifact_path("study.csv"));
    let trials = read_study_csv(&study_path)?;
    let pool = top_pool(&trials, ctx.config.pool_size);
    let pool_params: Vec<StrategyParams> = pool.iter().map(|t| t.params.clone()).collect();

    let scenarios: Vec<CostScenario> = scenario_grid(&ctx.config.profile);
    let summaries = evaluate_pool(
        &pool_params,
        &series,
        &funding,
        &ctx.config.profile,
        &scenarios,
        &window,
    )?;
    let policy = ctx.stable_policy();
    let report = stable_filter(&summaries, &policy);

    ctx.write_config_artifact()?;
    let mut robust_buf = Vec::new();
    write_robust_summary_csv(&summaries, Some(&ctx.run_id), &mut robust_buf)?;
    std::fs::write(ctx.artifact_path("robust_summary.csv"), robust_buf)?;
    let mut agg_buf = Vec::new();
    write_aggregates_csv(&summaries, Some(&ctx.run_id), &mut agg_buf)?;
    std::fs::write(ctx.artifact_path("robust_aggregates.csv"), agg_buf)?;
    ctx.write_json("screening_report.json", &report)?;

    // Rolling-window robustness stream (report only, never gates the
    // filter).
    if let Some(rolling) = &ctx.config.rolling {
        let sliced = series.slice_window(&window)?;
        let stats = evaluate_rolling_windows(
            &pool_params,
            &sliced,
            &funding,
            &ctx.config.profile,
            rolling.win,
            rolling.step,
        )?;
        let mut buf = Vec::new();
        writeln!(buf, "# run_id={}", ctx.run_id)?;
        writeln!(
            buf,
            "candidate_id,window_index,start_bar,end_bar,monthly_geom,max_dd,switch_density"
        )?;
        for s in &stats {
            writeln!(
                buf,
                "{},{},{},{},{},{},{}",
                s.candidate_id,
                s.window_index,
                s.start_bar,
                s.end_bar,
                s.monthly_geom,
                s.max_dd,
                s.switch_density
            )?;
        }
        std::fs::write(ctx.artifact_path("window_stats.csv"), buf)?;
    }

    println!(
        "screen {} window={} pool={} scenarios={} backtests={}",
        ctx.config.asset,
        window.name,
        pool.len(),
        scenarios.len(),
        summaries
            .iter()
            .map(|s| s.per_scenario.len())
            .sum::<usize>()
    );
    println!("passing: {} of {}", report.passing.len(), report.pool_size);
    println!("pool_rank  trial_id  mean_monthly  min_monthly  maxDD_mean  switch_mean");
    for id in &report.top_k {
        let summary = &summaries[id - 1];
        let trial_id = pool[id - 1].id;
        println!(
            "{:>9}  {:>8}  {:>12.5}  {:>11.5}  {:>10.4}  {:>11.4}",
            id,
            trial_id,
            summary.mean_monthly_true,
            summary.min_monthly_true,
            summary.max_dd_mean,
            summary.switch_density_mean
        );
    }
    Ok(())
}

pub fn cmd_diagnose_dsr(ctx: &Context) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let params = ctx.params()?;
    let window = ctx.window_or_full(&series, &["long", "full", "train_val"])?;
    let result = run_backtest(
        &series,
        &funding,
        &params,
        &ctx.config.profile,
        &window,
        ExecutionSemantics::StrictT1,
    )?;
    let summary = metrics(&result, ctx.config.rf_annual)?;
    let returns: Vec<f64> = result.rows.iter().map(|r| r.r_net).collect();
    let dsr_config = ctx.config.dsr.clone().unwrap_or_default();
    let skew = skewness(&returns);
    let kurt = kurtosis(&returns);
    let dsr = deflated_sharpe(
        summary.sharpe,
        returns.len(),
        skew,
        kurt,
        dsr_config.n_trials,
        dsr_config.sr_variance,
        ANNUALIZATION_FACTOR,
    )?;

    #[derive(Serialize)]
    struct DsrArtifact {
        window: String,
        sharpe_annualized: f64,
        n_obs: usize,
        skewness: f64,
        kurtosis: f64,
        n_trials: usize,
        sr_variance_across_trials: f64,
        deflated_sharpe: f64,
    }
    ctx.write_config_artifact()?;
    ctx.write_json(
        &format!("dsr_{}.json", ctx.run_id),
        &DsrArtifact {
            window: window.name.clone(),
            sharpe_annualized: summary.sharpe,
            n_obs: returns.len(),
            skewness: skew,
            kurtosis: kurt,
            n_trials: dsr_config.n_trials,
            sr_variance_across_trials: dsr_config.sr_variance,
            deflated_sharpe: dsr,
        },
    )?;
    println!(
        "dsr window={} sharpe={:.4} n_obs={} n_trials={} -> DSR={:.4}",
        window.name,
        summary.sharpe,
        returns.len(),
        dsr_config.n_trials,
        dsr
    );
    Ok(())
}

/// Monthly compounded returns of a ledger, in calendar order.
fn monthly_series(rows: &[perpbt_core::engine::LedgerRow]) -> Vec<f64> {
    use chrono::Datelike;
    let mut monthly = Vec::new();
    let mut key = None;
    let mut acc = 1.0f64;
    for row in rows {
        let k = (row.ts.year(), row.ts.month());
        if key != Some(k) {
            if key.is_some() {
                monthly.push(acc - 1.0);
            }
            key = Some(k);
            acc = 1.0;
        }
        acc *= 1.0 + row.r_net;
    }
    if key.is_some() {
        monthly.push(acc - 1.0);
    }
    monthly
}

pub fn cmd_diagnose_pbo(ctx: &Context, study: Option<PathBuf>) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let window = ctx.window_or_full(&series, &["train_val", "validation", "full"])?;
    let study_path = study.unwrap_or_else(|| ctx.artifact_path("study.csv"));
    let trials = read_study_csv(&study_path)?;
    let pool = top_pool(&trials, ctx.config.pool_size);
    let pbo_config = ctx.config.pbo.clone().unwrap_or_default();

    let mut ids = Vec::with_capacity(pool.len());
    let mut rows = Vec::with_capacity(pool.len());
    for trial in &pool {
        let result = run_backtest(
            &series,
            &funding,
            &trial.params,
            &ctx.config.profile,
            &window,
            ExecutionSemantics::StrictT1,
        )?;
        ids.push(trial.id);
        rows.push(monthly_series(&result.rows));
    }
    // Trailing months beyond a full segment multiple are dropped.
    let n_months = rows.iter().map(Vec::len).min().unwrap_or(0);
    let usable = n_months - n_months % pbo_config.n_segments;
    if usable == 0 {
        return Err(contract(format!(
            "{n_months} months cannot fill {} segments",
            pbo_config.n_segments
        )));
    }
    for row in &mut rows {
        row.truncate(usable);
    }
    let matrix = ReturnMatrix::new(ids, rows).map_err(CliError::from)?;
    let result = cscv_pbo(&matrix, pbo_config.n_segments)?;

    ctx.write_config_artifact()?;
    ctx.write_json(&format!("pbo_{}.json", ctx.run_id), &result)?;
    println!(
        "pbo window={} candidates={} months={} segments={} splits={} -> PBO={:.4}",
        window.name,
        matrix.n_candidates(),
        usable,
        pbo_config.n_segments,
        result.n_splits,
        result.pbo
    );
    Ok(())
}

pub fn cmd_diagnose_bootstrap(ctx: &Context, study: Option<PathBuf>) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let window = ctx.window_or_full(&series, &["validation", "train_val", "full"])?;
    let bootstrap_config = ctx
        .config
        .bootstrap
        .clone()
        .ok_or_else(|| usage("config has no `bootstrap` section (candidate_a, candidate_b)"))?;
    let study_path = study.unwrap_or_else(|| ctx.artifact_path("study.csv"));
    let trials = read_study_csv(&study_path)?;
    let find = |id: usize| -> Result<&Trial, CliError> {
        trials
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| usage(format!("trial {id} not in study")))
    };
    let trial_a = find(bootstrap_config.candidate_a)?;
    let trial_b = find(bootstrap_config.candidate_b)?;

    let monthly_of = |params: &StrategyParams| -> Result<Vec<f64>, CliError> {
        let result = run_backtest(
            &series,
            &funding,
            params,
            &ctx.config.profile,
            &window,
            ExecutionSemantics::StrictT1,
        )?;
        Ok(monthly_series(&result.rows))
    };
    let a = monthly_of(&trial_a.params)?;
    let b = monthly_of(&trial_b.params)?;
    let ci = block_bootstrap_ci(
        &a,
        &b,
        bootstrap_config.block_len,
        bootstrap_config.n_boot,
        bootstrap_config.level,
        ctx.config.seed,
    )?;

    ctx.write_config_artifact()?;
    ctx.write_json(&format!("bootstrap_{}.json", ctx.run_id), &ci)?;
    println!(
        "bootstrap window={} trials {} vs {}: delta={:.5} CI[{:.5}, {:.5}] block={} n_boot={}",
        window.name, trial_a.id, trial_b.id, ci.point, ci.lo, ci.hi, ci.block_len, ci.n_boot
    );
    Ok(())
}

pub fn cmd_diagnose_ablation(ctx: &Context, relax_caps: bool) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let params = ctx.params()?;
    let window = ctx.window_or_full(&series, &["full", "long", "train_val"])?;
    let ladder = cost_ablation(
        &params,
        &series,
        &funding,
        &ctx.config.profile,
        &window,
        ctx.config.rf_annual,
        relax_caps,
    )?;
    let gates = funding_gate_ablation(&params, &series, &funding, &ctx.config.profile, &window)?;
    let gated_metrics = metrics(&gates.gated, ctx.config.rf_annual)?;
    let ungated_metrics = metrics(&gates.ungated, ctx.config.rf_annual)?;

    #[derive(Serialize)]
    struct AblationArtifact<'a> {
        window: String,
        ladder: &'a perpbt_core::diagnostics::CostLadderReport,
        funding_gates_enabled: &'a MetricsSummary,
        funding_gates_disabled: &'a MetricsSummary,
    }
    ctx.write_config_artifact()?;
    ctx.write_json(
        &format!("ablation_{}.json", ctx.run_id),
        &AblationArtifact {
            window: window.name.clone(),
            ladder: &ladder,
            funding_gates_enabled: &gated_metrics,
            funding_gates_disabled: &ungated_metrics,
        },
    )?;

    println!("cost ladder window={}", window.name);
    println!("variant    ann_return     sharpe      maxDD  trades");
    for variant in [&ladder.rigorous, &ladder.standard, &ladder.naive] {
        println!(
            "{:<9} {:>11.4} {:>10.3} {:>10.4} {:>7}",
            variant.label, variant.ann_return, variant.sharpe, variant.max_dd, variant.trades
        );
    }
    println!("funding gates:");
    print_metrics("  enabled", &gated_metrics);
    print_metrics("  disabled", &ungated_metrics);
    Ok(())
}

pub fn cmd_diagnose_semantics(ctx: &Context, study: Option<PathBuf>) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let window = ctx.window_or_full(&series, &["validation", "train_val", "full"])?;
    let study_path = study.unwrap_or_else(|| ctx.artifact_path("study.csv"));
    let trials = read_study_csv(&study_path)?;
    let pool_trials = top_pool(&trials, ctx.config.pool_size.min(30));
    let pool: Vec<StrategyParams> = pool_trials.iter().map(|t| t.params.clone()).collect();
    let report = semantics_uplift(
        &pool,
        &series,
        &funding,
        &window,
        &ctx.config.profile,
        ctx.config.rf_annual,
    )?;

    ctx.write_config_artifact()?;
    ctx.write_json(&format!("semantics_{}.json", ctx.run_id), &report)?;
    println!(
        "semantics uplift window={} N={} median={:.4} p25={:.4} p75={:.4} frac>0={:.3}",
        window.name, report.n, report.median, report.p25, report.p75, report.frac_positive
    );
    Ok(())
}

pub fn cmd_diagnose_ddbucket(ctx: &Context) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let params = ctx.params()?;
    let window = ctx.window_or_full(&series, &["long", "full", "train_val"])?;
    let policy = ctx
        .config
        .dd_buckets
        .clone()
        .ok_or_else(|| usage("config has no `dd_buckets` section"))?;
    let base = run_backtest(
        &series,
        &funding,
        &params,
        &ctx.config.profile,
        &window,
        ExecutionSemantics::StrictT1,
    )?;
    let overlaid = dd_bucket_overlay(&base, &policy)?;
    let base_metrics = metrics(&base, ctx.config.rf_annual)?;
    let overlay_metrics = metrics(&overlaid, ctx.config.rf_annual)?;

    #[derive(Serialize)]
    struct DdBucketArtifact<'a> {
        window: String,
        policy: &'a perpbt_core::diagnostics::DdBucketPolicy,
        baseline: &'a MetricsSummary,
        overlay: &'a MetricsSummary,
    }
    ctx.write_config_artifact()?;
    let ledger_name = format!("ledger_ddbucket_{}.csv", window.name);
    let mut buf = Vec::new();
    write_ledger_csv(&overlaid.rows, Some(&ctx.run_id), &mut buf)
        .map_err(|e| contract(e.to_string()))?;
    std::fs::write(ctx.artifact_path(&ledger_name), buf)?;
    ctx.write_json(
        &format!("ddbucket_{}.json", ctx.run_id),
        &DdBucketArtifact {
            window: window.name.clone(),
            policy: &policy,
            baseline: &base_metrics,
            overlay: &overlay_metrics,
        },
    )?;
    println!("drawdown-bucket overlay window={}", window.name);
    print_metrics("baseline", &base_metrics);
    print_metrics("overlay", &overlay_metrics);
    Ok(())
}

pub fn cmd_audit(ctx: &Context, reference: &Path, tolerance: f64) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let params = ctx.params()?;
    let window = ctx.window_or_full(&series, &["full"])?;
    let reference_rows = read_ledger_csv(reference).map_err(|e| usage(e.to_string()))?;
    let inputs = ReplayInputs {
        series: &series,
        funding: &funding,
        params: &params,
        profile: &ctx.config.profile,
        window: &window,
        semantics: ctx.semantics,
    };
    let report = replay_and_audit(&inputs, &reference_rows, tolerance)?;
    ctx.write_config_artifact()?;
    ctx.write_json("audit.json", &report)?;
    println!(
        "audit bars={} max|dS|={} max|dPi|={} trades_diff={} fees_diff={} slip_diff={} fund_diff={} pass={}",
        report.n_bars,
        report.max_abs_signal_diff,
        report.max_abs_exposure_diff,
        report.trades_diff,
        report.fees_diff,
        report.slip_diff,
        report.fund_diff,
        report.pass
    );
    if !report.pass {
        return Err(contract(format!("audit failed at tolerance {tolerance}")));
    }
    Ok(())
}

pub fn cmd_guard(ctx: &Context, ledger: &Path) -> Result<(), CliError> {
    let guard_config = ctx
        .config
        .guard
        .clone()
        .ok_or_else(|| usage("config has no `guard` section"))?;
    let rows = read_ledger_csv(ledger).map_err(|e| usage(e.to_string()))?;
    let (state, logs) = guard_step(GuardState::new(), &rows, &guard_config)?;

    ctx.write_config_artifact()?;
    let mut buf = Vec::new();
    write_guard_log_csv(&logs, Some(&ctx.run_id), &mut buf)?;
    std::fs::write(ctx.artifact_path("guard_log.csv"), buf)?;
    let kills = logs
        .iter()
        .filter(|l| l.decision == perpbt_core::audit::GuardDecision::Kill)
        .count();
    let watches = logs
        .iter()
        .filter(|l| l.decision == perpbt_core::audit::GuardDecision::Watch)
        .count();
    println!(
        "guard rows={} final={} watch_steps={} kill_steps={}",
        logs.len(),
        state.decision,
        watches,
        kills
    );
    Ok(())
}

pub fn cmd_synth(ctx: &Context) -> Result<(), CliError> {
    let synth_config = ctx.config.synth.clone().unwrap_or_default();
    let series = gen_series(&synth_config.series);
    let funding = synthetic_funding(&series, &synth_config.funding)?;

    if let Some(parent) = ctx.config.data.ohlcv_csv.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut ohlcv_buf = Vec::new();
    write_ohlcv_csv(&series, &mut ohlcv_buf)?;
    std::fs::write(&ctx.config.data.ohlcv_csv, ohlcv_buf)?;
    if let Some(funding_path) = &ctx.config.data.funding_csv {
        if let Some(parent) = funding_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut funding_buf = Vec::new();
        write_funding_csv(&funding, &mut funding_buf)?;
        std::fs::write(funding_path, funding_buf)?;
    }
    ctx.write_config_artifact()?;
    println!(
        "synth {}: {} bars -> {}, {} funding points -> {}",
        ctx.config.asset,
        series.len(),
        ctx.config.data.ohlcv_csv.display(),
        funding.points().len(),
        ctx.config
            .data
            .funding_csv
            .as_ref()
            .map_or("(not written)".to_string(), |p| p.display().to_string())
    );
    Ok(())
}

pub fn cmd_threshold_scan(ctx: &Context, study: Option<PathBuf>) -> Result<(), CliError> {
    let series = ctx.load_series()?;
    let funding = ctx.load_funding()?;
    let window = ctx.window_or_full(&series, &["train_val", "validation"])?;
    let study_path = study.unwrap_or_else(|| ctx.artifact_path("study.csv"));
    let trials = read_study_csv(&study_path)?;
    let pool = top_pool(&trials, ctx.config.pool_size);
    let pool_params: Vec<StrategyParams> = pool.iter().map(|t| t.params.clone()).collect();
    let scenarios = scenario_grid(&ctx.config.profile);
    let summaries = evaluate_pool(
        &pool_params,
        &series,
        &funding,
        &ctx.config.profile,
        &scenarios,
        &window,
    )?;
    let policy = ctx.stable_policy();
    let rows = threshold_scan(
        &summaries,
        &[
            policy.min_mean_monthly - 0.002,
            policy.min_mean_monthly,
            policy.min_mean_monthly + 0.002,
        ],
        &[
            policy.max_mean_dd - 0.05,
            policy.max_mean_dd,
            policy.max_mean_dd + 0.05,
        ],
        &[
            policy.max_switch_density - 0.02,
            policy.max_switch_density,
            policy.max_switch_density + 0.02,
        ],
        &policy,
    );
    #[derive(Serialize)]
    struct ScanArtifact<'a> {
        rows: &'a [perpbt_core::screening::ScanRow],
    }
    ctx.write_config_artifact()?;
    ctx.write_json("threshold_scan.json", &ScanArtifact { rows: &rows })?;
    println!("threshold scan: {} policy variants", rows.len());
    println!("floor   dd_cap  switch_cap  selected  n_passing");
    for row in &rows {
        println!(
            "{:<7.4} {:<7.3} {:<11.3} {:<9} {:>9}",
            row.min_mean_monthly,
            row.max_mean_dd,
            row.max_switch_density,
            row.selected.map_or("-".to_string(), |s| s.to_string()),
            row.n_passing
        );
    }
    Ok(())
}
