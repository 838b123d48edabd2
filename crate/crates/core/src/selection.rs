//! Top-K sweep over a pool ranking: per-k bias and variance estimates, the
//! MSE-optimal borrowed subset, and the end-to-end estimation pipeline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ExternalPool, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    adaptive_lasso_threshold, estimate_bias_vector, lasso_borrow_set, tau_aipw, tau_fused,
    EstimateReport, Method,
};
use crate::influence::rank_pool;
use crate::models::hessian;
use crate::nuisance::{fit_nuisances, FitConfig};
use crate::scalar::{real, Real};

/// Which comparability ordering produced the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingSource {
    Influence,
    LassoBias,
}

/// One successful row of the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseRow<F> {
    pub k: usize,
    pub tau_hat: F,
    /// `τ̂_{S_k} − τ̂_aipw`; zero at `k = 0` by construction.
    pub bias_hat: F,
    /// Sample variance of the estimated influence values over `N_trial + k`.
    pub var_hat: F,
    pub mse_hat: F,
}

/// The estimated MSE curve over the k grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseProfile<F> {
    pub rows: Vec<MseRow<F>>,
    pub k_grid: Vec<usize>,
    /// Grid value attaining the smallest estimated MSE (ties toward smaller k).
    pub k_star: usize,
    /// The full ranking order the sweep consumed.
    pub order: Vec<usize>,
    pub ranking_source: RankingSource,
    /// Rows that failed to fit, with their errors.
    pub failures: Vec<(usize, String)>,
}

impl<F: Real> MseProfile<F> {
    pub fn row(&self, k: usize) -> Option<&MseRow<F>> {
        self.rows.iter().find(|r| r.k == k)
    }

    /// CSV rendering: `k,tau,bias,var,mse` with one row per successful k.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,tau,bias,var,mse\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.k,
                r.tau_hat.to_f64().unwrap_or(f64::NAN),
                r.bias_hat.to_f64().unwrap_or(f64::NAN),
                r.var_hat.to_f64().unwrap_or(f64::NAN),
                r.mse_hat.to_f64().unwrap_or(f64::NAN)
            ));
        }
        out
    }
}

/// Sweep and pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig<F> {
    pub fit: FitConfig<F>,
    /// Explicit k grid; `None` selects the default spaced grid.
    pub k_grid: Option<Vec<usize>>,
    /// Enumerate every k instead of the spaced grid.
    pub dense: bool,
    /// Hessian damping passed to the influence ranking (0 = automatic).
    pub hessian_damping: F,
}

impl<F: Real> Default for PipelineConfig<F> {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            k_grid: None,
            dense: false,
            hessian_damping: F::zero(),
        }
    }
}

/// Default sweep grid: `⌈n_pool / 50⌉`-spaced values plus the endpoints and 0.
pub fn default_k_grid(n_pool: usize, dense: bool) -> Vec<usize> {
    let mut grid: Vec<usize> = if dense {
        (0..=n_pool).collect()
    } else {
        let step = n_pool.div_ceil(50).max(1);
        let mut g: Vec<usize> = (0..=n_pool).step_by(step).collect();
        g.push(0);
        g.push(1.min(n_pool));
        g.push(n_pool);
        g
    };
    grid.sort_unstable();
    grid.dedup();
    grid
}

fn normalize_grid(k_grid: &[usize], n_pool: usize) -> Result<Vec<usize>> {
    let mut grid = k_grid.to_vec();
    grid.push(0);
    grid.sort_unstable();
    grid.dedup();
    if let Some(&bad) = grid.iter().find(|&&k| k > n_pool) {
        return Err(Error::KOutOfRange {
            k: bad,
            max: n_pool,
        });
    }
    Ok(grid)
}

/// Evaluate the fused estimator over the nested prefixes of `order`.
///
/// For each k the nuisances are refit on trial ∪ prefix, the bias is
/// estimated against the trial-only AIPW value, and the variance is the
/// influence-value sample variance over the combined size.
pub fn mse_profile<F: Real>(
    trial: &TrialDataset<F>,
    pool: &ExternalPool<F>,
    order: &[usize],
    ranking_source: RankingSource,
    k_grid: &[usize],
    cfg: &FitConfig<F>,
) -> Result<MseProfile<F>> {
    if order.len() != pool.len() {
        return Err(Error::Invalid(format!(
            "ranking covers {} of {} pool samples",
            order.len(),
            pool.len()
        )));
    }
    let grid = normalize_grid(k_grid, pool.len())?;

    let ns0 = fit_nuisances(trial, Some(pool), &[], cfg)?;
    let aipw = tau_aipw(trial, &ns0)?;

    let outcomes: Vec<(usize, Result<MseRow<F>>)> = grid
        .par_iter()
        .map(|&k| {
            let row = if k == 0 {
                let var = aipw.se_hat * aipw.se_hat;
                Ok(MseRow {
                    k: 0,
                    tau_hat: aipw.tau_hat,
                    bias_hat: F::zero(),
                    var_hat: var,
                    mse_hat: var,
                })
            } else {
                (|| {
                    let borrowed = &order[..k];
                    let ns = fit_nuisances(trial, Some(pool), borrowed, cfg)?;
                    let rep = tau_fused(trial, pool, borrowed, &ns)?;
                    let bias = rep.tau_hat - aipw.tau_hat;
                    let var = rep.se_hat * rep.se_hat;
                    Ok(MseRow {
                        k,
                        tau_hat: rep.tau_hat,
                        bias_hat: bias,
                        var_hat: var,
                        mse_hat: bias * bias + var,
                    })
                })()
            };
            (k, row)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    if rows.is_empty() {
        return Err(Error::AllRowsFailed {
            first: failures.first().map(|(_, e)| e.clone()).unwrap_or_default(),
        });
    }
    let k_star = rows
        .iter()
        .min_by(|a, b| {
            a.mse_hat
                .partial_cmp(&b.mse_hat)
                .unwrap()
                .then(a.k.cmp(&b.k))
        })
        .map(|r| r.k)
        .unwrap();
    Ok(MseProfile {
        rows,
        k_grid: grid,
        k_star,
        order: order.to_vec(),
        ranking_source,
        failures,
    })
}

/// The MSE-minimizing k and its borrowed index set.
pub fn select_optimal<F: Real>(profile: &MseProfile<F>) -> Result<(usize, Vec<usize>)> {
    if profile.rows.is_empty() {
        return Err(Error::AllRowsFailed {
            first: "empty profile".into(),
        });
    }
    Ok((profile.k_star, profile.order[..profile.k_star].to_vec()))
}

/// Full influence-guided pipeline: fit the trial-control model, rank the
/// pool, sweep the grid, and return the estimate at the selected k together
/// with the profile. Deterministic given the inputs.
pub fn estimate_full_pipeline<F: Real>(
    trial: &TrialDataset<F>,
    pool: Option<&ExternalPool<F>>,
    cfg: &PipelineConfig<F>,
) -> Result<(EstimateReport<F>, MseProfile<F>)> {
    let Some(pool) = pool else {
        let ns0 = fit_nuisances(trial, None, &[], &cfg.fit)?;
        let rep = tau_aipw(trial, &ns0)?;
        let var = rep.se_hat * rep.se_hat;
        let profile = MseProfile {
            rows: vec![MseRow {
                k: 0,
                tau_hat: rep.tau_hat,
                bias_hat: F::zero(),
                var_hat: var,
                mse_hat: var,
            }],
            k_grid: vec![0],
            k_star: 0,
            order: Vec::new(),
            ranking_source: RankingSource::Influence,
            failures: Vec::new(),
        };
        return Ok((rep, profile));
    };

    let ns0 = fit_nuisances(trial, Some(pool), &[], &cfg.fit)?;
    let controls: Vec<_> = trial.controls().collect();
    let h = hessian(&ns0.mu0, controls.iter().copied(), cfg.hessian_damping)?;
    let ranking = rank_pool(&ns0.mu0, &h, controls.iter().copied(), pool)?;
    let grid = match &cfg.k_grid {
        Some(g) => g.clone(),
        None => default_k_grid(pool.len(), cfg.dense),
    };
    let profile = mse_profile(
        trial,
        pool,
        &ranking.order,
        RankingSource::Influence,
        &grid,
        &cfg.fit,
    )?;
    let (k_star, borrowed) = select_optimal(&profile)?;
    let mut report = if k_star == 0 {
        tau_aipw(trial, &ns0)?
    } else {
        let ns = fit_nuisances(trial, Some(pool), &borrowed, &cfg.fit)?;
        tau_fused(trial, pool, &borrowed, &ns)?
    };
    report.method = Method::If;
    report.k_borrowed = k_star;
    Ok((report, profile))
}

/// Adaptive-lasso baseline with penalty selection: sweeps a 20-point log
/// grid of penalties, borrows the zero-bias set for each, and keeps the
/// penalty whose borrowed set minimizes the estimated MSE.
pub fn lasso_auto<F: Real>(
    trial: &TrialDataset<F>,
    pool: &ExternalPool<F>,
    nu: F,
    cfg: &FitConfig<F>,
) -> Result<(EstimateReport<F>, F, Vec<usize>)> {
    let ns0 = fit_nuisances(trial, Some(pool), &[], cfg)?;
    let aipw = tau_aipw(trial, &ns0)?;
    let bv = estimate_bias_vector(trial, pool, &ns0)?;

    // Smallest penalty annihilating every coordinate: lambda_max such that
    // |b| <= lambda sigma^2 / (2 |b|^nu) for all j.
    let lambda_max = bv
        .b_hat
        .iter()
        .zip(&bv.sigma2_hat)
        .map(|(&b, &s2)| real::<F>(2.0) * b.abs().powf(nu + F::one()) / s2)
        .fold(F::zero(), F::max)
        .max(real(1e-8));
    let lambda_min = lambda_max * real::<F>(1e-4);
    let ratio = (lambda_max / lambda_min).powf(F::one() / real::<F>(19.0));
    let lambdas: Vec<F> = (0..20).map(|i| lambda_min * ratio.powi(i)).collect();

    let mut best: Option<(F, F, Vec<usize>, EstimateReport<F>)> = None;
    for lambda in lambdas {
        let thresholded = adaptive_lasso_threshold(&bv, lambda, nu)?;
        let set = lasso_borrow_set(&thresholded)?;
        let (rep, mse) = if set.is_empty() {
            let var = aipw.se_hat * aipw.se_hat;
            (aipw.clone(), var)
        } else {
            let ns = fit_nuisances(trial, Some(pool), &set, cfg)?;
            let rep = tau_fused(trial, pool, &set, &ns)?;
            let bias = rep.tau_hat - aipw.tau_hat;
            let mse = bias * bias + rep.se_hat * rep.se_hat;
            (rep, mse)
        };
        let better = match &best {
            None => true,
            Some((best_mse, ..)) => mse < *best_mse,
        };
        if better {
            best = Some((mse, lambda, set, rep));
        }
    }
    let (_, lambda, set, mut rep) = best.expect("non-empty penalty grid");
    rep.method = Method::Lasso;
    rep.k_borrowed = set.len();
    Ok((rep, lambda, set))
}
