//! Treatment-effect estimators: trial-only AIPW, the fused estimator over a
//! borrowed subset, full borrowing, and the bias-vector machinery behind the
//! adaptive-lasso borrowing baseline.

use serde::{Deserialize, Serialize};

use crate::data::{check_borrowed_indices, ExternalPool, Sample, TrialDataset};
use crate::error::{Error, Result};
use crate::models::ridge_normal_cholesky;
use crate::nuisance::NuisanceSet;
use crate::scalar::{clip_prob, real, Real, EPS_CLIP};

/// Estimator identity carried on reports and benchmark rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Aipw,
    Full,
    Lasso,
    If,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Aipw => "aipw",
            Method::Full => "full",
            Method::Lasso => "lasso",
            Method::If => "if",
        };
        f.write_str(s)
    }
}

/// Estimation diagnostics surfaced alongside the point estimate.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Number of samples whose combined propensity hit a clipping bound.
    pub clip_saturated: usize,
}

/// A point estimate with its influence-function-based standard error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport<F> {
    pub tau_hat: F,
    pub se_hat: F,
    pub n_used: usize,
    /// Per-sample efficient-influence-function values (mean 0 by centering).
    #[serde(skip)]
    pub eif_values: Vec<F>,
    pub method: Method,
    pub k_borrowed: usize,
    pub diagnostics: Diagnostics,
}

/// Per-pool-sample conditional-mean discrepancy and its variance proxy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasVector<F> {
    /// `mu0_ext(x_j) − mu0(x_j)` for every pool index.
    pub b_hat: Vec<F>,
    /// Diagonal variance proxy per pool index (strictly positive).
    pub sigma2_hat: Vec<F>,
    /// Soft-thresholded values, once a penalty has been applied.
    pub b_tilde: Option<Vec<F>>,
}

fn sample_variance<F: Real>(values: &[F], mean: F) -> F {
    let n = values.len();
    if n < 2 {
        return F::zero();
    }
    let ss = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .fold(F::zero(), |a, b| a + b);
    ss / F::from_usize(n - 1).unwrap()
}

/// Shared estimator core. Evaluates the non-centered summand
/// `(π/q)(RA(Y−m₁)/e_S − (1−A)(Y−m₀)/(1−e_S)) + (R/q)(m₁−m₀)` over the given
/// samples, averages into `τ̂`, and centers the EIF inside the `R/q` block.
fn fused_core<'a, F: Real>(
    samples: impl Iterator<Item = &'a Sample<F>>,
    ns: &NuisanceSet<F>,
    pi_of: impl Fn(&NuisanceSet<F>, &[F]) -> Result<F>,
    m0_of: impl Fn(&NuisanceSet<F>, &[F]) -> Result<F>,
    q: F,
    method: Method,
    k_borrowed: usize,
) -> Result<EstimateReport<F>> {
    let one = F::one();
    let lo = real::<F>(EPS_CLIP);
    let hi = one - lo;
    let mut terms: Vec<F> = Vec::new();
    let mut r_over_q: Vec<F> = Vec::new();
    let mut clip_saturated = 0usize;
    for s in samples {
        let pi = pi_of(ns, &s.x)?;
        let es = clip_prob(ns.e1_at(&s.x)? * pi);
        if es == lo || es == hi {
            clip_saturated += 1;
        }
        let m1 = ns.mu1.predict(&s.x)?;
        let m0 = m0_of(ns, &s.x)?;
        let (r, a) = (
            if s.r { one } else { F::zero() },
            if s.a { one } else { F::zero() },
        );
        let weighted = (pi / q) * (r * a * (s.y - m1) / es - (one - a) * (s.y - m0) / (one - es));
        let rq = r / q;
        terms.push(weighted + rq * (m1 - m0));
        r_over_q.push(rq);
    }
    let n = terms.len();
    if n == 0 {
        return Err(Error::EmptyArm { arm: "combined" });
    }
    let n_f = F::from_usize(n).unwrap();
    let tau_hat = terms.iter().copied().fold(F::zero(), |a, b| a + b) / n_f;
    let eif_values: Vec<F> = terms
        .iter()
        .zip(&r_over_q)
        .map(|(&t, &rq)| t - rq * tau_hat)
        .collect();
    let var = sample_variance(&eif_values, F::zero());
    let se_hat = (var / n_f).sqrt();
    Ok(EstimateReport {
        tau_hat,
        se_hat,
        n_used: n,
        eif_values,
        method,
        k_borrowed,
        diagnostics: Diagnostics { clip_saturated },
    })
}

/// Trial-only AIPW estimator. Uses `mu0`, `mu1`, and `e1` from the bundle;
/// the sampling score and trial fraction are identically 1.
pub fn tau_aipw<F: Real>(
    trial: &TrialDataset<F>,
    ns: &NuisanceSet<F>,
) -> Result<EstimateReport<F>> {
    fused_core(
        trial.samples().iter(),
        ns,
        |_, _| Ok(F::one()),
        |ns, x| ns.mu0.predict(x),
        F::one(),
        Method::Aipw,
        0,
    )
}

/// Fused estimator over the trial plus a borrowed subset.
///
/// `ns` must have been fitted with the same borrowed set. With an empty set
/// the result collapses to [`tau_aipw`] bit for bit.
pub fn tau_fused<F: Real>(
    trial: &TrialDataset<F>,
    pool: &ExternalPool<F>,
    borrowed: &[usize],
    ns: &NuisanceSet<F>,
) -> Result<EstimateReport<F>> {
    check_borrowed_indices(borrowed, pool.len())?;
    let mut sorted = borrowed.to_vec();
    sorted.sort_unstable();
    let samples = trial
        .samples()
        .iter()
        .chain(sorted.iter().map(|&j| &pool.samples()[j]));
    let mut report = fused_core(
        samples,
        ns,
        NuisanceSet::pi_at,
        |ns, x| ns.m0.predict(x),
        ns.q_hat,
        Method::If,
        sorted.len(),
    )?;
    if sorted.is_empty() {
        report.method = Method::Aipw;
    }
    Ok(report)
}

/// Fused estimator borrowing the entire pool.
pub fn tau_full<F: Real>(
    trial: &TrialDataset<F>,
    pool: Option<&ExternalPool<F>>,
    ns: &NuisanceSet<F>,
) -> Result<EstimateReport<F>> {
    let mut report = match pool {
        Some(pool) => {
            let all: Vec<usize> = (0..pool.len()).collect();
            tau_fused(trial, pool, &all, ns)?
        }
        None => tau_aipw(trial, ns)?,
    };
    report.method = Method::Full;
    Ok(report)
}

/// Estimate the per-pool-sample bias `b̂_j = μ̂_{0,ext}(X_j) − μ̂₀(X_j)` with a
/// diagonal variance proxy from both fits' normal equations.
pub fn estimate_bias_vector<F: Real>(
    trial: &TrialDataset<F>,
    pool: &ExternalPool<F>,
    ns: &NuisanceSet<F>,
) -> Result<BiasVector<F>> {
    let mu0 = &ns.mu0;
    let mu0_ext = ns
        .mu0_ext
        .as_ref()
        .ok_or_else(|| Error::Invalid("nuisance set was fitted without a pool".into()))?;

    let (chol_pool, _) =
        ridge_normal_cholesky(pool.samples().iter(), mu0_ext.lambda_reg, &mu0_ext.fm)?;
    let controls: Vec<&Sample<F>> = trial.controls().collect();
    let (chol_ctrl, _) = ridge_normal_cholesky(controls.iter().copied(), mu0.lambda_reg, &mu0.fm)?;

    let resid_var = |model: &crate::models::RidgeModel<F>,
                     samples: &mut dyn Iterator<Item = &Sample<F>>|
     -> Result<F> {
        let mut ss = F::zero();
        let mut n = 0usize;
        for s in samples {
            let r = model.predict(&s.x)? - s.y;
            ss += r * r;
            n += 1;
        }
        let dof = n.saturating_sub(model.fm.d_out).max(1);
        Ok((ss / F::from_usize(dof).unwrap()).max(real(1e-12)))
    };
    let s2_pool = resid_var(mu0_ext, &mut pool.samples().iter())?;
    let s2_ctrl = resid_var(mu0, &mut controls.iter().copied())?;

    let mut b_hat = Vec::with_capacity(pool.len());
    let mut sigma2_hat = Vec::with_capacity(pool.len());
    for s in pool.samples() {
        b_hat.push(mu0_ext.predict(&s.x)? - mu0.predict(&s.x)?);
        let phi = ndarray::Array1::from_vec(mu0.fm.expand(&s.x)?);
        let q = s2_pool * chol_pool.quad_form_inv(&phi) + s2_ctrl * chol_ctrl.quad_form_inv(&phi);
        sigma2_hat.push(q.max(real(1e-12)));
    }
    Ok(BiasVector {
        b_hat,
        sigma2_hat,
        b_tilde: None,
    })
}

/// Soft-threshold the bias vector: with a diagonal variance the adaptive
/// lasso solution separates into
/// `b̃_j = sign(b̂_j) · max(0, |b̂_j| − λ σ̂²_j / (2 |b̂_j|^ν))`.
pub fn adaptive_lasso_threshold<F: Real>(
    bv: &BiasVector<F>,
    lambda_pen: F,
    nu: F,
) -> Result<BiasVector<F>> {
    if lambda_pen < F::zero() {
        return Err(Error::Invalid("lambda_pen must be nonnegative".into()));
    }
    if nu <= F::zero() {
        return Err(Error::Invalid("nu must be positive".into()));
    }
    let two = real::<F>(2.0);
    let b_tilde = bv
        .b_hat
        .iter()
        .zip(&bv.sigma2_hat)
        .map(|(&b, &s2)| {
            if b == F::zero() {
                F::zero()
            } else {
                let shrink = lambda_pen * s2 / (two * b.abs().powf(nu));
                b.signum() * (b.abs() - shrink).max(F::zero())
            }
        })
        .collect();
    Ok(BiasVector {
        b_hat: bv.b_hat.clone(),
        sigma2_hat: bv.sigma2_hat.clone(),
        b_tilde: Some(b_tilde),
    })
}

/// Pool indices whose thresholded bias is exactly zero (the borrowed set of
/// the adaptive-lasso baseline), in pool order.
pub fn lasso_borrow_set<F: Real>(bv: &BiasVector<F>) -> Result<Vec<usize>> {
    let b_tilde = bv
        .b_tilde
        .as_ref()
        .ok_or_else(|| Error::Invalid("bias vector has not been thresholded".into()))?;
    Ok(b_tilde
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == F::zero())
        .map(|(j, _)| j)
        .collect())
}

/// Pool indices by ascending `|b̂|`, ties broken by index: the Top-K
/// comparator of the adaptive-lasso baseline.
pub fn lasso_rank<F: Real>(bv: &BiasVector<F>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bv.b_hat.len()).collect();
    order.sort_by(|&a, &b| {
        bv.b_hat[a]
            .abs()
            .partial_cmp(&bv.b_hat[b].abs())
            .expect("finite bias estimates")
            .then(a.cmp(&b))
    });
    order
}
