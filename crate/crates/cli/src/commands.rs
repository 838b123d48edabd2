//! Command implementations: simulate, estimate, borrow, benchmark.

use std::path::{Path, PathBuf};

use borrowlab_core::bench::{
    run_monte_carlo, run_real_data, sweep_control_n, sweep_shift, BenchOptions, MetricsTable,
};
use borrowlab_core::data::{BasisKind, ExternalPool, TrialDataset};
use borrowlab_core::estimators::{
    estimate_bias_vector, lasso_rank, tau_aipw, tau_full, tau_fused, EstimateReport, Method,
};
use borrowlab_core::influence::rank_pool;
use borrowlab_core::models::hessian;
use borrowlab_core::nuisance::{fit_nuisances, FitConfig};
use borrowlab_core::selection::{
    default_k_grid, estimate_full_pipeline, lasso_auto, mse_profile, select_optimal,
    PipelineConfig, RankingSource,
};
use borrowlab_core::simgen::{gen_one_d, generate, true_tau, OneDConfig, ScenarioConfig};
use serde::Serialize;

use crate::config::{DataSource, OutputFormat, RunConfig, ScenarioKind, TopK};
use crate::error::CliError;
use crate::io;

const REAL_DATA_OUTCOME_SCALE: f64 = 1e4;
const REAL_DATA_CONTROL_N: usize = 80;

fn core_err(e: borrowlab_core::Error, locus: &str) -> CliError {
    CliError::from_core(e, locus)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::new("io", e.to_string(), &parent.display().to_string()))?;
        }
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::new("io", e.to_string(), &path.display().to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new("serialize", e.to_string(), &path.display().to_string()))?;
    write_text(path, &text)
}

fn fit_config(cfg: &RunConfig, scenario: Option<ScenarioKind>) -> FitConfig<f64> {
    let default_degree = match scenario {
        Some(ScenarioKind::Nonlinear) => 2,
        _ => 1,
    };
    let degree = cfg.degree.unwrap_or(default_degree);
    let outcome_basis = if degree <= 1 {
        BasisKind::LinearWithIntercept
    } else {
        BasisKind::Polynomial(degree)
    };
    FitConfig {
        outcome_basis,
        ridge_lambda: cfg.lambda,
        ..FitConfig::default()
    }
}

/// One concrete dataset pair for estimate/borrow, plus scenario metadata.
struct ResolvedData {
    trial: TrialDataset<f64>,
    pool: Option<ExternalPool<f64>>,
    scenario: Option<ScenarioKind>,
}

fn resolve_data(cfg: &RunConfig) -> Result<ResolvedData, CliError> {
    match &cfg.source {
        DataSource::Scenario(kind) => {
            let (trial, pool) = match kind {
                ScenarioKind::Linear | ScenarioKind::Nonlinear => {
                    let sc = scenario_config(*kind, cfg.seed);
                    generate(&sc).map_err(|e| core_err(e, "scenario"))?
                }
                ScenarioKind::OneD => {
                    let data = gen_one_d(&OneDConfig {
                        seed: cfg.seed,
                        ..OneDConfig::default()
                    })
                    .map_err(|e| core_err(e, "scenario"))?;
                    (data.trial, data.pool)
                }
            };
            Ok(ResolvedData {
                trial,
                pool: Some(pool),
                scenario: Some(*kind),
            })
        }
        DataSource::Files { rct, external } => {
            let (trial, trial_cov) = io::load_trial_csv(rct, &cfg.outcome_col, &cfg.treat_col)?;
            let pool = match external {
                Some(path) => {
                    let (pool, pool_cov) =
                        io::load_pool_csv(path, &cfg.outcome_col, Some(&cfg.treat_col))?;
                    io::check_schema(&trial_cov, &pool_cov)?;
                    Some(pool)
                }
                None => None,
            };
            if cfg.standardize {
                log::info!(
                    "standardizing covariates by trial statistics; outcomes divided by {REAL_DATA_OUTCOME_SCALE:.0}"
                );
                let st = io::Standardizer::fit(&trial, REAL_DATA_OUTCOME_SCALE);
                Ok(ResolvedData {
                    trial: st.apply_trial(&trial),
                    pool: pool.as_ref().map(|p| st.apply_pool(p)),
                    scenario: None,
                })
            } else {
                Ok(ResolvedData {
                    trial,
                    pool,
                    scenario: None,
                })
            }
        }
    }
}

fn scenario_config(kind: ScenarioKind, seed: u64) -> ScenarioConfig<f64> {
    match kind {
        ScenarioKind::Linear => ScenarioConfig::linear(seed),
        ScenarioKind::Nonlinear => ScenarioConfig::nonlinear(seed),
        ScenarioKind::OneD => unreachable!("one-d handled separately"),
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        "simulate" => simulate(cfg),
        "estimate" => estimate(cfg),
        "borrow" => borrow(cfg),
        "benchmark" => benchmark(cfg),
        other => Err(CliError::new(
            "config",
            format!("unknown command {other}"),
            "cli",
        )),
    }
}

#[derive(Serialize)]
struct ScenarioMeta {
    scenario: String,
    seed: u64,
    tau_true: f64,
    n_trial: usize,
    n_pool: usize,
    outlier_indices: Vec<usize>,
}

fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let DataSource::Scenario(kind) = &cfg.source else {
        return Err(CliError::new(
            "config",
            "simulate requires --scenario",
            "flags",
        ));
    };
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::new("io", e.to_string(), &cfg.out.display().to_string()))?;
    let (trial, pool, tau, outliers) = match kind {
        ScenarioKind::Linear | ScenarioKind::Nonlinear => {
            let sc = scenario_config(*kind, cfg.seed);
            let (trial, pool) = generate(&sc).map_err(|e| core_err(e, "scenario"))?;
            let tau = true_tau(&sc).map_err(|e| core_err(e, "true-tau"))?;
            (trial, pool, tau, Vec::new())
        }
        ScenarioKind::OneD => {
            let data = gen_one_d(&OneDConfig {
                seed: cfg.seed,
                ..OneDConfig::default()
            })
            .map_err(|e| core_err(e, "scenario"))?;
            (data.trial, data.pool, 1.0, data.outlier_indices)
        }
    };
    io::write_trial_csv(&cfg.out.join("trial.csv"), &trial, None)?;
    io::write_pool_csv(&cfg.out.join("pool.csv"), &pool, None)?;
    write_json(
        &cfg.out.join("scenario.json"),
        &ScenarioMeta {
            scenario: format!("{kind:?}"),
            seed: cfg.seed,
            tau_true: tau,
            n_trial: trial.len(),
            n_pool: pool.len(),
            outlier_indices: outliers,
        },
    )?;
    println!(
        "wrote {} ({} trial rows, {} pool rows, tau = {tau:.6})",
        cfg.out.display(),
        trial.len(),
        pool.len()
    );
    Ok(())
}

fn pool_required<'a>(
    pool: &'a Option<ExternalPool<f64>>,
    what: &str,
) -> Result<&'a ExternalPool<f64>, CliError> {
    pool.as_ref()
        .ok_or_else(|| CliError::new("config", format!("{what} requires --external"), "flags"))
}

fn estimate_one(
    data: &ResolvedData,
    method: Method,
    topk: &Option<TopK>,
    fit: &FitConfig<f64>,
    dense: bool,
) -> Result<EstimateReport<f64>, CliError> {
    let trial = &data.trial;
    let locus = "estimate";
    match method {
        Method::Aipw => {
            let ns = fit_nuisances(trial, data.pool.as_ref(), &[], fit)
                .map_err(|e| core_err(e, locus))?;
            tau_aipw(trial, &ns).map_err(|e| core_err(e, locus))
        }
        Method::Full => {
            let pool = pool_required(&data.pool, "full borrowing")?;
            let all: Vec<usize> = (0..pool.len()).collect();
            let ns = fit_nuisances(trial, Some(pool), &all, fit).map_err(|e| core_err(e, locus))?;
            tau_full(trial, Some(pool), &ns).map_err(|e| core_err(e, locus))
        }
        Method::If => {
            let pool = pool_required(&data.pool, "influence borrowing")?;
            match topk.clone().unwrap_or(TopK::Auto) {
                TopK::Auto => {
                    let pipe = PipelineConfig {
                        fit: fit.clone(),
                        dense,
                        ..PipelineConfig::default()
                    };
                    estimate_full_pipeline(trial, Some(pool), &pipe)
                        .map(|(rep, _)| rep)
                        .map_err(|e| core_err(e, locus))
                }
                TopK::Fixed(k) => {
                    let ns0 = fit_nuisances(trial, Some(pool), &[], fit)
                        .map_err(|e| core_err(e, locus))?;
                    let controls: Vec<_> = trial.controls().collect();
                    let h = hessian(&ns0.mu0, controls.iter().copied(), 0.0)
                        .map_err(|e| core_err(e, locus))?;
                    let ranking = rank_pool(&ns0.mu0, &h, controls.iter().copied(), pool)
                        .map_err(|e| core_err(e, locus))?;
                    if k > ranking.order.len() {
                        return Err(CliError::new(
                            "k-out-of-range",
                            format!("topk {k} exceeds pool size {}", ranking.order.len()),
                            locus,
                        ));
                    }
                    let borrowed = &ranking.order[..k];
                    let ns = fit_nuisances(trial, Some(pool), borrowed, fit)
                        .map_err(|e| core_err(e, locus))?;
                    let mut rep =
                        tau_fused(trial, pool, borrowed, &ns).map_err(|e| core_err(e, locus))?;
                    rep.method = Method::If;
                    Ok(rep)
                }
                TopK::List(_) => Err(CliError::new(
                    "config",
                    "estimate takes a single --topk value or auto",
                    "flags",
                )),
            }
        }
        Method::Lasso => {
            let pool = pool_required(&data.pool, "lasso borrowing")?;
            match topk.clone().unwrap_or(TopK::Auto) {
                TopK::Auto => lasso_auto(trial, pool, 1.0, fit)
                    .map(|(rep, _, _)| rep)
                    .map_err(|e| core_err(e, locus)),
                TopK::Fixed(k) => {
                    let ns0 = fit_nuisances(trial, Some(pool), &[], fit)
                        .map_err(|e| core_err(e, locus))?;
                    let bv =
                        estimate_bias_vector(trial, pool, &ns0).map_err(|e| core_err(e, locus))?;
                    let order = lasso_rank(&bv);
                    if k > order.len() {
                        return Err(CliError::new(
                            "k-out-of-range",
                            format!("topk {k} exceeds pool size {}", order.len()),
                            locus,
                        ));
                    }
                    let borrowed = &order[..k];
                    let ns = fit_nuisances(trial, Some(pool), borrowed, fit)
                        .map_err(|e| core_err(e, locus))?;
                    let mut rep =
                        tau_fused(trial, pool, borrowed, &ns).map_err(|e| core_err(e, locus))?;
                    rep.method = Method::Lasso;
                    Ok(rep)
                }
                TopK::List(_) => Err(CliError::new(
                    "config",
                    "estimate takes a single --topk value or auto",
                    "flags",
                )),
            }
        }
    }
}

fn estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let data = resolve_data(cfg)?;
    let method = cfg.methods.first().copied().unwrap_or(Method::Aipw);
    if cfg.methods.len() > 1 {
        log::warn!("estimate uses a single method; taking {method}");
    }
    let fit = fit_config(cfg, data.scenario);
    let report = estimate_one(&data, method, &cfg.topk, &fit, cfg.dense)?;
    match cfg.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => write_json(&cfg.out, &report)?,
        OutputFormat::Csv => {
            let csv = format!(
                "tau_hat,se_hat,n_used,method,k_borrowed,clip_saturated\n{:.16e},{:.16e},{},{},{},{}\n",
                report.tau_hat,
                report.se_hat,
                report.n_used,
                report.method,
                report.k_borrowed,
                report.diagnostics.clip_saturated
            );
            write_text(&cfg.out, &csv)?;
        }
    }
    println!(
        "{}: tau_hat = {:.6}, se_hat = {:.6}, k_borrowed = {} -> {}",
        report.method,
        report.tau_hat,
        report.se_hat,
        report.k_borrowed,
        cfg.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RankingEntry {
    index: usize,
    score: f64,
}

#[derive(Serialize)]
struct SelectedSet {
    k_star: usize,
    indices: Vec<usize>,
    ranking_source: RankingSource,
}

fn borrow(cfg: &RunConfig) -> Result<(), CliError> {
    let data = resolve_data(cfg)?;
    let pool = pool_required(&data.pool, "borrow")?;
    let trial = &data.trial;
    let fit = fit_config(cfg, data.scenario);
    let locus = "borrow";

    let method = cfg.methods.first().copied().unwrap_or(Method::If);
    let (order, scores, source) = match method {
        Method::Lasso => {
            let ns0 =
                fit_nuisances(trial, Some(pool), &[], &fit).map_err(|e| core_err(e, locus))?;
            let bv = estimate_bias_vector(trial, pool, &ns0).map_err(|e| core_err(e, locus))?;
            let order = lasso_rank(&bv);
            let scores = bv.b_hat.iter().map(|b| b.abs()).collect();
            (order, scores, RankingSource::LassoBias)
        }
        _ => {
            let ns0 =
                fit_nuisances(trial, Some(pool), &[], &fit).map_err(|e| core_err(e, locus))?;
            let controls: Vec<_> = trial.controls().collect();
            let h =
                hessian(&ns0.mu0, controls.iter().copied(), 0.0).map_err(|e| core_err(e, locus))?;
            let ranking = rank_pool(&ns0.mu0, &h, controls.iter().copied(), pool)
                .map_err(|e| core_err(e, locus))?;
            (ranking.order, ranking.scores, RankingSource::Influence)
        }
    };

    let grid = match &cfg.topk {
        Some(TopK::List(ks)) => ks.clone(),
        Some(TopK::Fixed(k)) => vec![0, *k],
        _ => default_k_grid(pool.len(), cfg.dense),
    };
    let profile =
        mse_profile(trial, pool, &order, source, &grid, &fit).map_err(|e| core_err(e, locus))?;
    let (k_star, indices) = select_optimal(&profile).map_err(|e| core_err(e, locus))?;

    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::new("io", e.to_string(), &cfg.out.display().to_string()))?;
    let entries: Vec<RankingEntry> = order
        .iter()
        .map(|&index| RankingEntry {
            index,
            score: scores[index],
        })
        .collect();
    write_json(&cfg.out.join("ranking.json"), &entries)?;
    write_text(&cfg.out.join("profile.csv"), &profile.to_csv())?;
    write_json(
        &cfg.out.join("selected.json"),
        &SelectedSet {
            k_star,
            indices,
            ranking_source: source,
        },
    )?;
    println!(
        "borrow: ranked {} pool samples, k* = {k_star} -> {}",
        pool.len(),
        cfg.out.display()
    );
    Ok(())
}

fn table_paths(base: &Path, tag: Option<&str>) -> PathBuf {
    match tag {
        None => base.to_path_buf(),
        Some(tag) => {
            let stem = base
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("benchmark");
            let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
            base.with_file_name(format!("{stem}_{tag}.{ext}"))
        }
    }
}

fn write_table(
    cfg: &RunConfig,
    table: &MetricsTable<f64>,
    tag: Option<&str>,
) -> Result<(), CliError> {
    let path = table_paths(&cfg.out, tag);
    match cfg.format.unwrap_or(OutputFormat::Csv) {
        OutputFormat::Csv => write_text(&path, &table.to_csv())?,
        OutputFormat::Json => write_json(&path, table)?,
    }
    if cfg.plot_data {
        for method in [Method::If, Method::Lasso] {
            if cfg.methods.contains(&method) {
                let curve = table.mse_curve_csv(method);
                let curve_path = table_paths(
                    &path.with_extension("csv"),
                    Some(&format!("curve_{method}")),
                );
                write_text(&curve_path, &curve)?;
            }
        }
    }
    println!(
        "benchmark table ({} rows, tau_true = {:.6}) -> {}",
        table.rows.len(),
        table.tau_true,
        path.display()
    );
    Ok(())
}

fn bench_options(
    cfg: &RunConfig,
    pool_len: usize,
    scenario: Option<ScenarioKind>,
) -> BenchOptions<f64> {
    let (k_list, auto_k) = match &cfg.topk {
        Some(TopK::Auto) => (Vec::new(), true),
        Some(TopK::Fixed(k)) => (vec![*k], false),
        Some(TopK::List(ks)) => (ks.clone(), false),
        None => {
            let default: &[usize] = if scenario.is_some() {
                &[10, 50, 100, 150, 200, 250, 300]
            } else {
                &[10, 15, 20, 25, 30, 35, 40]
            };
            (
                default.iter().copied().filter(|&k| k <= pool_len).collect(),
                scenario.is_none(),
            )
        }
    };
    BenchOptions {
        methods: cfg.methods.clone(),
        k_list,
        auto_k,
        reps: cfg.reps,
        base_seed: cfg.seed,
        bias_mode: cfg.bias_mode,
        control_n: None,
        pipeline: PipelineConfig {
            fit: fit_config(cfg, scenario),
            dense: cfg.dense,
            ..PipelineConfig::default()
        },
    }
}

fn benchmark(cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.source {
        DataSource::Scenario(kind) => {
            if *kind == ScenarioKind::OneD {
                return Err(CliError::new(
                    "config",
                    "benchmark supports the linear and nonlinear scenarios",
                    "flags",
                ));
            }
            if !cfg.mu2.is_empty() && !cfg.control_n.is_empty() {
                return Err(CliError::new(
                    "config",
                    "--mu2 and --control-n sweeps are mutually exclusive",
                    "flags",
                ));
            }
            let sc = scenario_config(*kind, cfg.seed);
            let opts = bench_options(cfg, sc.n_pool, Some(*kind));
            if !cfg.mu2.is_empty() {
                let tables =
                    sweep_shift(&sc, &cfg.mu2, &opts).map_err(|e| core_err(e, "benchmark"))?;
                let single = tables.len() == 1;
                for (mu2, table) in tables {
                    let tag = format!("mu2_{mu2}");
                    write_table(cfg, &table, if single { None } else { Some(&tag) })?;
                }
            } else if !cfg.control_n.is_empty() {
                let tables = sweep_control_n(&sc, &cfg.control_n, &opts)
                    .map_err(|e| core_err(e, "benchmark"))?;
                let single = tables.len() == 1;
                for (nc, table) in tables {
                    let tag = format!("nc_{nc}");
                    write_table(cfg, &table, if single { None } else { Some(&tag) })?;
                }
            } else {
                let table = run_monte_carlo(&sc, &opts).map_err(|e| core_err(e, "benchmark"))?;
                write_table(cfg, &table, None)?;
            }
            Ok(())
        }
        DataSource::Files { .. } => {
            let data = resolve_data(cfg)?;
            let pool = pool_required(&data.pool, "benchmark")?;
            let control_ns: Vec<usize> = if cfg.control_n.is_empty() {
                vec![REAL_DATA_CONTROL_N.min(data.trial.n_control())]
            } else {
                cfg.control_n.clone()
            };
            let opts = bench_options(cfg, pool.len(), None);
            let single = control_ns.len() == 1;
            for nc in control_ns {
                let table = run_real_data(&data.trial, pool, nc, &opts)
                    .map_err(|e| core_err(e, "benchmark"))?;
                let tag = format!("nc_{nc}");
                write_table(cfg, &table, if single { None } else { Some(&tag) })?;
            }
            Ok(())
        }
    }
}
