//! Monte Carlo harness: per-method bias/std/MSE tables over replicated
//! synthetic scenarios, covariate-shift and control-size sweeps, and the
//! subsample-replicated real-data benchmark.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ExternalPool, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_bias_vector, lasso_rank, tau_aipw, tau_full, tau_fused, EstimateReport, Method,
};
use crate::influence::rank_pool;
use crate::models::hessian;
use crate::nuisance::fit_nuisances;
use crate::scalar::Real;
use crate::selection::{mse_profile, select_optimal, PipelineConfig, RankingSource};
use crate::simgen::{generate, true_tau, ScenarioConfig};

/// Distinct seed stream for control-arm subsampling.
const SUBSAMPLE_STREAM: u64 = 0x5851_F42D_4C95_7F2D;

/// How a Top-K method chooses its k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KSpec {
    Fixed(usize),
    /// Per-replication MSE-selected k.
    Auto,
}

impl std::fmt::Display for KSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KSpec::Fixed(k) => write!(f, "{k}"),
            KSpec::Auto => f.write_str("auto"),
        }
    }
}

/// Bias aggregation convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMode {
    /// `|mean(τ̂) − τ|` (default).
    AbsMean,
    /// `mean |τ̂ − τ|`.
    MeanAbs,
}

/// Harness options.
#[derive(Debug, Clone)]
pub struct BenchOptions<F> {
    pub methods: Vec<Method>,
    /// Fixed k values evaluated for the Top-K methods.
    pub k_list: Vec<usize>,
    /// Also evaluate the per-replication selected k for the Top-K methods.
    pub auto_k: bool,
    pub reps: usize,
    pub base_seed: u64,
    pub bias_mode: BiasMode,
    /// Subsample the trial control arm to this size each replication.
    pub control_n: Option<usize>,
    pub pipeline: PipelineConfig<F>,
}

impl<F: Real> Default for BenchOptions<F> {
    fn default() -> Self {
        Self {
            methods: vec![Method::Aipw, Method::Full, Method::Lasso, Method::If],
            k_list: vec![10, 50, 100, 150, 200, 250, 300],
            auto_k: false,
            reps: 200,
            base_seed: 0,
            bias_mode: BiasMode::AbsMean,
            control_n: None,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Aggregated Monte Carlo metrics for one (method, k) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow<F> {
    pub method: Method,
    pub k: KSpec,
    pub mc_bias: F,
    pub mc_std: F,
    pub mc_mse: F,
    /// Average of the per-replication standard errors.
    pub mean_se_hat: F,
    /// Monte Carlo standard error of the bias estimate.
    pub mc_se_of_bias: F,
    pub n_reps: usize,
    pub n_failed: usize,
}

/// Full benchmark table for one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsTable<F> {
    pub rows: Vec<MetricsRow<F>>,
    pub scenario: String,
    pub tau_true: F,
    /// Cells dropped because more than 5% of replications failed.
    pub aborted: Vec<(Method, KSpec, String)>,
}

impl<F: Real> MetricsTable<F> {
    pub fn row(&self, method: Method, k: KSpec) -> Option<&MetricsRow<F>> {
        self.rows.iter().find(|r| r.method == method && r.k == k)
    }

    /// CSV rendering: `method,k,bias,std,mse,mean_se_hat,reps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,k,bias,std,mse,mean_se_hat,reps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.method,
                r.k,
                r.mc_bias.to_f64().unwrap_or(f64::NAN),
                r.mc_std.to_f64().unwrap_or(f64::NAN),
                r.mc_mse.to_f64().unwrap_or(f64::NAN),
                r.mean_se_hat.to_f64().unwrap_or(f64::NAN),
                r.n_reps
            ));
        }
        out
    }

    /// Per-k MSE curve for one method, as CSV (`k,mse`).
    pub fn mse_curve_csv(&self, method: Method) -> String {
        let mut out = String::from("k,mse\n");
        for r in self.rows.iter().filter(|r| r.method == method) {
            out.push_str(&format!(
                "{},{:.16e}\n",
                r.k,
                r.mc_mse.to_f64().unwrap_or(f64::NAN)
            ));
        }
        out
    }
}

type CellKey = (Method, KSpec);

/// Evaluate every requested (method, k) cell on one replication.
///
/// The `if` and `lasso` pipelines share the generated data and the same
/// trial-arm outcome fits, pairing the comparison.
fn evaluate_cells<F: Real>(
    trial: &TrialDataset<F>,
    pool: &ExternalPool<F>,
    opts: &BenchOptions<F>,
) -> Vec<(CellKey, Result<EstimateReport<F>>)> {
    let fit = &opts.pipeline.fit;
    let mut out: Vec<(CellKey, Result<EstimateReport<F>>)> = Vec::new();

    let ns0 = match fit_nuisances(trial, Some(pool), &[], fit) {
        Ok(ns) => ns,
        Err(e) => {
            let msg = e.to_string();
            for method in &opts.methods {
                for k in cell_ks(*method, opts, pool.len()) {
                    out.push(((*method, k), Err(Error::Invalid(msg.clone()))));
                }
            }
            return out;
        }
    };

    let aipw = tau_aipw(trial, &ns0);

    let rankings: Vec<(Method, Result<Vec<usize>>)> = [Method::If, Method::Lasso]
        .into_iter()
        .filter(|m| opts.methods.contains(m))
        .map(|m| {
            let order = match m {
                Method::If => {
                    let controls: Vec<_> = trial.controls().collect();
                    hessian(
                        &ns0.mu0,
                        controls.iter().copied(),
                        opts.pipeline.hessian_damping,
                    )
                    .and_then(|h| {
                        rank_pool(&ns0.mu0, &h, controls.iter().copied(), pool).map(|r| r.order)
                    })
                }
                Method::Lasso => estimate_bias_vector(trial, pool, &ns0).map(|bv| lasso_rank(&bv)),
                _ => unreachable!(),
            };
            (m, order)
        })
        .collect();

    for method in &opts.methods {
        match method {
            Method::Aipw => {
                for k in cell_ks(Method::Aipw, opts, pool.len()) {
                    out.push(((Method::Aipw, k), aipw.clone()));
                }
            }
            Method::Full => {
                let full = tau_full(trial, Some(pool), &{
                    let all: Vec<usize> = (0..pool.len()).collect();
                    match fit_nuisances(trial, Some(pool), &all, fit) {
                        Ok(ns) => ns,
                        Err(e) => {
                            for k in cell_ks(Method::Full, opts, pool.len()) {
                                out.push(((Method::Full, k), Err(Error::Invalid(e.to_string()))));
                            }
                            continue;
                        }
                    }
                });
                for k in cell_ks(Method::Full, opts, pool.len()) {
                    out.push(((Method::Full, k), full.clone()));
                }
            }
            m @ (Method::If | Method::Lasso) => {
                let order = rankings
                    .iter()
                    .find(|(rm, _)| rm == m)
                    .map(|(_, o)| o)
                    .expect("ranking computed for requested method");
                match order {
                    Err(e) => {
                        for k in cell_ks(*m, opts, pool.len()) {
                            out.push(((*m, k), Err(Error::Invalid(e.to_string()))));
                        }
                    }
                    Ok(order) => {
                        for k in &opts.k_list {
                            let rep = (|| {
                                if *k > order.len() {
                                    return Err(Error::KOutOfRange {
                                        k: *k,
                                        max: order.len(),
                                    });
                                }
                                let borrowed = &order[..*k];
                                let ns = fit_nuisances(trial, Some(pool), borrowed, fit)?;
                                let mut rep = tau_fused(trial, pool, borrowed, &ns)?;
                                rep.method = *m;
                                Ok(rep)
                            })();
                            out.push(((*m, KSpec::Fixed(*k)), rep));
                        }
                        if opts.auto_k {
                            let source = match m {
                                Method::If => RankingSource::Influence,
                                _ => RankingSource::LassoBias,
                            };
                            let rep = (|| {
                                let grid = match &opts.pipeline.k_grid {
                                    Some(g) => g.clone(),
                                    None => crate::selection::default_k_grid(
                                        pool.len(),
                                        opts.pipeline.dense,
                                    ),
                                };
                                let profile = mse_profile(trial, pool, order, source, &grid, fit)?;
                                let (k_star, borrowed) = select_optimal(&profile)?;
                                let mut rep = if k_star == 0 {
                                    aipw.clone()?
                                } else {
                                    let ns = fit_nuisances(trial, Some(pool), &borrowed, fit)?;
                                    tau_fused(trial, pool, &borrowed, &ns)?
                                };
                                rep.method = *m;
                                rep.k_borrowed = k_star;
                                Ok(rep)
                            })();
                            out.push(((*m, KSpec::Auto), rep));
                        }
                    }
                }
            }
        }
    }
    out
}

/// The k cells a method occupies in the output table.
fn cell_ks<F: Real>(method: Method, opts: &BenchOptions<F>, pool_len: usize) -> Vec<KSpec> {
    match method {
        // Constant across k: one row per requested k for easy comparison.
        Method::Aipw | Method::Full => {
            let mut ks: Vec<KSpec> = opts.k_list.iter().map(|&k| KSpec::Fixed(k)).collect();
            if ks.is_empty() {
                ks.push(KSpec::Fixed(if method == Method::Full {
                    pool_len
                } else {
                    0
                }));
            }
            if opts.auto_k {
                ks.push(KSpec::Auto);
            }
            ks
        }
        Method::If | Method::Lasso => {
            let mut ks: Vec<KSpec> = opts.k_list.iter().map(|&k| KSpec::Fixed(k)).collect();
            if opts.auto_k {
                ks.push(KSpec::Auto);
            }
            ks
        }
    }
}

fn aggregate<F: Real>(
    per_rep: Vec<Vec<(CellKey, Result<EstimateReport<F>>)>>,
    tau_true: F,
    scenario: String,
    opts: &BenchOptions<F>,
) -> Result<MetricsTable<F>> {
    let mut keys: Vec<CellKey> = Vec::new();
    for (key, _) in per_rep.first().into_iter().flatten() {
        keys.push(*key);
    }
    let reps = per_rep.len();
    let mut rows = Vec::new();
    let mut aborted = Vec::new();
    for key in keys {
        let mut taus: Vec<F> = Vec::with_capacity(reps);
        let mut ses: Vec<F> = Vec::with_capacity(reps);
        let mut failed = 0usize;
        let mut first_err = String::new();
        for rep in &per_rep {
            match rep.iter().find(|(k, _)| *k == key) {
                Some((_, Ok(r))) => {
                    taus.push(r.tau_hat);
                    ses.push(r.se_hat);
                }
                Some((_, Err(e))) => {
                    if first_err.is_empty() {
                        first_err = e.to_string();
                    }
                    failed += 1;
                }
                None => failed += 1,
            }
        }
        if failed * 20 > reps {
            aborted.push((key.0, key.1, first_err));
            continue;
        }
        let n = taus.len();
        let n_f = F::from_usize(n).unwrap();
        let mean = taus.iter().copied().fold(F::zero(), |a, b| a + b) / n_f;
        let mc_bias = match opts.bias_mode {
            BiasMode::AbsMean => (mean - tau_true).abs(),
            BiasMode::MeanAbs => {
                taus.iter()
                    .map(|&t| (t - tau_true).abs())
                    .fold(F::zero(), |a, b| a + b)
                    / n_f
            }
        };
        let var = if n > 1 {
            taus.iter()
                .map(|&t| (t - mean) * (t - mean))
                .fold(F::zero(), |a, b| a + b)
                / F::from_usize(n - 1).unwrap()
        } else {
            F::zero()
        };
        let mc_std = var.sqrt();
        let mc_mse = taus
            .iter()
            .map(|&t| (t - tau_true) * (t - tau_true))
            .fold(F::zero(), |a, b| a + b)
            / n_f;
        let mean_se_hat = ses.iter().copied().fold(F::zero(), |a, b| a + b) / n_f;
        rows.push(MetricsRow {
            method: key.0,
            k: key.1,
            mc_bias,
            mc_std,
            mc_mse,
            mean_se_hat,
            mc_se_of_bias: mc_std / n_f.sqrt(),
            n_reps: n,
            n_failed: failed,
        });
    }
    Ok(MetricsTable {
        rows,
        scenario,
        tau_true,
        aborted,
    })
}

fn subsample_rows(rng: &mut ChaCha8Rng, available: usize, take: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = rand::seq::index::sample(rng, available, take)
        .into_iter()
        .collect();
    rows.sort_unstable();
    rows
}

/// Run the synthetic benchmark: `reps` replications, each generating fresh
/// data with seed `base_seed + r` and evaluating every requested cell.
pub fn run_monte_carlo<F: Real>(
    cfg: &ScenarioConfig<F>,
    opts: &BenchOptions<F>,
) -> Result<MetricsTable<F>>
where
    StandardNormal: Distribution<F>,
{
    if opts.reps < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: opts.reps,
        });
    }
    let tau = true_tau(cfg)?;
    let per_rep: Vec<Vec<(CellKey, Result<EstimateReport<F>>)>> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            let cfg_r = cfg.with_seed(opts.base_seed.wrapping_add(r as u64));
            let generated = generate(&cfg_r).and_then(|(trial, pool)| {
                let trial = match opts.control_n {
                    Some(nc) => {
                        if nc > trial.n_control() {
                            return Err(Error::SubsampleTooLarge {
                                requested: nc,
                                available: trial.n_control(),
                            });
                        }
                        let mut rng = ChaCha8Rng::seed_from_u64(
                            opts.base_seed.wrapping_add(r as u64) ^ SUBSAMPLE_STREAM,
                        );
                        let rows = subsample_rows(&mut rng, trial.n_control(), nc);
                        trial.subsample_controls(&rows)?
                    }
                    None => trial,
                };
                Ok((trial, pool))
            });
            match generated {
                Ok((trial, pool)) => evaluate_cells(&trial, &pool, opts),
                Err(e) => {
                    // Subsample larger than the control arm is a configuration
                    // error: surface it on every cell.
                    let msg = e.to_string();
                    let mut out = Vec::new();
                    for method in &opts.methods {
                        for k in cell_ks(*method, opts, cfg.n_pool) {
                            out.push(((*method, k), Err(Error::Invalid(msg.clone()))));
                        }
                    }
                    out
                }
            }
        })
        .collect();
    let table = aggregate(per_rep, tau, cfg.digest(), opts)?;
    if table.rows.is_empty() && !table.aborted.is_empty() {
        return Err(Error::TooManyFailures {
            failed: opts.reps,
            total: opts.reps,
        });
    }
    Ok(table)
}

/// Covariate-shift sweep: one table per pool location in `mu2_list`.
pub fn sweep_shift<F: Real>(
    cfg: &ScenarioConfig<F>,
    mu2_list: &[F],
    opts: &BenchOptions<F>,
) -> Result<Vec<(F, MetricsTable<F>)>>
where
    StandardNormal: Distribution<F>,
{
    mu2_list
        .iter()
        .map(|&mu2| {
            let mut shifted = cfg.clone();
            shifted.mu2 = mu2;
            run_monte_carlo(&shifted, opts).map(|t| (mu2, t))
        })
        .collect()
}

/// Control-arm-size sweep: subsample the trial control arm to each size in
/// `nc_list` (fresh draw per replication), keeping the treated arm intact.
pub fn sweep_control_n<F: Real>(
    cfg: &ScenarioConfig<F>,
    nc_list: &[usize],
    opts: &BenchOptions<F>,
) -> Result<Vec<(usize, MetricsTable<F>)>>
where
    StandardNormal: Distribution<F>,
{
    nc_list
        .iter()
        .map(|&nc| {
            if nc > cfg.n_control {
                return Err(Error::SubsampleTooLarge {
                    requested: nc,
                    available: cfg.n_control,
                });
            }
            let sub_opts = BenchOptions {
                control_n: Some(nc),
                ..opts.clone()
            };
            run_monte_carlo(cfg, &sub_opts).map(|t| (nc, t))
        })
        .collect()
}

/// Real-data benchmark: with no generating mechanism available, the
/// full-trial AIPW estimate serves as pseudo-truth and replications
/// subsample the control arm.
pub fn run_real_data<F: Real>(
    trial: &TrialDataset<F>,
    pool: &ExternalPool<F>,
    control_n: usize,
    opts: &BenchOptions<F>,
) -> Result<MetricsTable<F>> {
    if opts.reps < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: opts.reps,
        });
    }
    if control_n > trial.n_control() {
        return Err(Error::SubsampleTooLarge {
            requested: control_n,
            available: trial.n_control(),
        });
    }
    let ns_full = fit_nuisances(trial, Some(pool), &[], &opts.pipeline.fit)?;
    let pseudo_truth = tau_aipw(trial, &ns_full)?.tau_hat;

    let per_rep: Vec<Vec<(CellKey, Result<EstimateReport<F>>)>> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(opts.base_seed.wrapping_add(r as u64) ^ SUBSAMPLE_STREAM);
            let rows = subsample_rows(&mut rng, trial.n_control(), control_n);
            match trial.subsample_controls(&rows) {
                Ok(sub) => evaluate_cells(&sub, pool, opts),
                Err(e) => {
                    let msg = e.to_string();
                    let mut out = Vec::new();
                    for method in &opts.methods {
                        for k in cell_ks(*method, opts, pool.len()) {
                            out.push(((*method, k), Err(Error::Invalid(msg.clone()))));
                        }
                    }
                    out
                }
            }
        })
        .collect();
    aggregate(
        per_rep,
        pseudo_truth,
        format!("real-data control_n={control_n} seed={}", opts.base_seed),
        opts,
    )
}

/// Finite-replication identity linking the three reported metrics:
/// `mse = bias² + std²·(reps−1)/reps` when bias is `|mean − τ|`.
pub fn mse_identity_gap<F: Real>(row: &MetricsRow<F>) -> F {
    let n = F::from_usize(row.n_reps).unwrap();
    row.mc_mse - (row.mc_bias * row.mc_bias + row.mc_std * row.mc_std * (n - F::one()) / n)
}
