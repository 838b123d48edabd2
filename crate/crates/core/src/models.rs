//! Parametric regression models with analytic loss gradients and Hessians.
//!
//! The outcome models are ridge-regularized linear models over a
//! [`FeatureMap`] basis, so the per-sample squared-error loss has an exact
//! closed-form gradient and Hessian and refits are exact. Propensity and
//! sampling scores are logistic models fit by IRLS.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMap, Sample};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue_est, Cholesky};
use crate::scalar::{clip_prob, real, Real};

/// Gradient norm threshold at which IRLS declares convergence.
const LOGISTIC_TOL: f64 = 1e-8;
/// IRLS iteration cap.
const LOGISTIC_MAX_ITER: usize = 100;
/// Minimum ridge added to every logistic fit; guards separable data.
const LOGISTIC_MIN_RIDGE: f64 = 1e-6;
/// Relative tolerance for the ridge normal-equation residual.
const RIDGE_RESIDUAL_TOL: f64 = 1e-8;
/// Smallest-eigenvalue estimate below which Hessian damping is forced.
const HESSIAN_EIG_FLOOR: f64 = 1e-10;

/// Ridge-regularized linear outcome model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel<F> {
    /// Fitted coefficients in the expanded basis (intercept first).
    pub theta: Vec<F>,
    /// L2 penalty strength; the intercept coordinate is unpenalized.
    pub lambda_reg: F,
    pub fm: FeatureMap,
}

impl<F: Real> RidgeModel<F> {
    pub fn predict(&self, x: &[F]) -> Result<F> {
        let phi = self.fm.expand(x)?;
        Ok(dot(&self.theta, &phi))
    }

    /// Per-sample squared-error loss; the ridge penalty is not included.
    pub fn loss(&self, z: &Sample<F>) -> Result<F> {
        let r = self.predict(&z.x)? - z.y;
        Ok(r * r)
    }
}

/// Logistic model for propensity and sampling scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<F> {
    pub beta: Vec<F>,
    pub fm: FeatureMap,
    pub converged: bool,
    pub iterations: usize,
}

/// Cholesky factorization of the damped loss Hessian over the trial controls.
#[derive(Debug, Clone)]
pub struct HessianFactor<F> {
    matrix: Array2<F>,
    chol: Cholesky<F>,
    damping: F,
}

impl<F: Real> HessianFactor<F> {
    /// Solve `H_reg v = b`.
    pub fn solve(&self, b: &Array1<F>) -> Array1<F> {
        self.chol.solve(b)
    }

    /// Damping that was actually applied (0 when none was needed).
    pub fn damping(&self) -> F {
        self.damping
    }

    /// The damped Hessian itself.
    pub fn matrix(&self) -> &Array2<F> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Expanded design matrix for a sample list.
fn design<'a, F: Real>(
    samples: impl IntoIterator<Item = &'a Sample<F>>,
    fm: &FeatureMap,
) -> Result<(Array2<F>, Array1<F>)> {
    let mut flat = Vec::new();
    let mut y = Vec::new();
    for s in samples {
        flat.extend(fm.expand(&s.x)?);
        y.push(s.y);
    }
    let n = y.len();
    let phi = Array2::from_shape_vec((n, fm.d_out), flat).expect("rectangular design");
    Ok((phi, Array1::from_vec(y)))
}

/// `ΦᵀΦ + λ·I` with the intercept coordinate unpenalized.
fn penalized_normal_matrix<F: Real>(phi: &Array2<F>, lambda: F) -> Array2<F> {
    let mut normal = phi.t().dot(phi);
    for j in 1..normal.nrows() {
        normal[(j, j)] += lambda;
    }
    normal
}

/// Cholesky factor of the penalized normal matrix for a sample list.
///
/// Shared between ridge fitting and the per-point variance proxy of the
/// bias-vector baseline.
pub(crate) fn ridge_normal_cholesky<'a, F: Real>(
    samples: impl IntoIterator<Item = &'a Sample<F>>,
    lambda: F,
    fm: &FeatureMap,
) -> Result<(Cholesky<F>, Array2<F>)> {
    let (phi, _) = design(samples, fm)?;
    let normal = penalized_normal_matrix(&phi, lambda);
    let chol = Cholesky::new(&normal)?;
    Ok((chol, normal))
}

/// Closed-form ridge fit: solves `(ΦᵀΦ + λ I_noint) θ = Φᵀ y`.
pub fn fit_ridge<'a, F: Real>(
    samples: impl IntoIterator<Item = &'a Sample<F>>,
    lambda_reg: F,
    fm: FeatureMap,
) -> Result<RidgeModel<F>> {
    if lambda_reg < F::zero() {
        return Err(Error::Invalid("lambda_reg must be nonnegative".into()));
    }
    let (phi, y) = design(samples, &fm)?;
    let n = phi.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let normal = penalized_normal_matrix(&phi, lambda_reg);
    let rhs = phi.t().dot(&y);
    let chol = Cholesky::new(&normal)?;
    let theta = chol.solve(&rhs);
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite {
            what: "ridge coefficients".into(),
        });
    }
    // Normal-equation residual guard: catches factorizations that succeeded
    // numerically on a nearly singular system.
    let residual = &normal.dot(&theta) - &rhs;
    let res_norm = residual.dot(&residual).sqrt();
    let rhs_norm = rhs.dot(&rhs).sqrt();
    if res_norm > real::<F>(RIDGE_RESIDUAL_TOL) * (F::one() + rhs_norm) {
        let cond = max_eigenvalue(&normal, 50) / real::<F>(f64::MIN_POSITIVE);
        return Err(Error::Factorization {
            cond_estimate: cond.to_f64().unwrap_or(f64::INFINITY),
        });
    }
    Ok(RidgeModel {
        theta: theta.to_vec(),
        lambda_reg,
        fm,
    })
}

/// Gradient of the squared-error loss at `z`: `2 (μ̂(x) − y) φ(x)`.
pub fn grad_loss<F: Real>(model: &RidgeModel<F>, z: &Sample<F>) -> Result<Array1<F>> {
    let phi = model.fm.expand(&z.x)?;
    let resid = dot(&model.theta, &phi) - z.y;
    let two = real::<F>(2.0);
    Ok(Array1::from_iter(phi.into_iter().map(|p| two * resid * p)))
}

/// Mean loss Hessian over the control samples, damped and factorized:
/// `(2 / N_C) Σ φ_i φ_iᵀ + damping · I`.
///
/// With `damping = 0` a default of `1e-6 · trace(H) / d_out` is applied
/// automatically when the factorization fails or the smallest-eigenvalue
/// estimate falls below `1e-10`.
pub fn hessian<'a, F: Real>(
    model: &RidgeModel<F>,
    controls: impl IntoIterator<Item = &'a Sample<F>>,
    damping: F,
) -> Result<HessianFactor<F>> {
    if damping < F::zero() {
        return Err(Error::Invalid("damping must be nonnegative".into()));
    }
    let (phi, _) = design(controls, &model.fm)?;
    let n = phi.nrows();
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let d = model.fm.d_out;
    let scale = real::<F>(2.0) / real::<F>(n as f64);
    let mut base = phi.t().dot(&phi);
    base.mapv_inplace(|v| v * scale);

    let trace = (0..d).map(|j| base[(j, j)]).fold(F::zero(), |a, b| a + b);
    let default_damping = real::<F>(1e-6) * trace / real::<F>(d as f64).max(F::one());

    let mut applied = damping;
    for attempt in 0..6 {
        let mut damped = base.clone();
        if applied > F::zero() {
            for j in 0..d {
                damped[(j, j)] += applied;
            }
        }
        match Cholesky::new(&damped) {
            Ok(chol) => {
                if applied == F::zero() {
                    let min_eig = min_eigenvalue_est(&damped, &chol, 30);
                    if min_eig < real::<F>(HESSIAN_EIG_FLOOR) {
                        applied = default_damping.max(real::<F>(HESSIAN_EIG_FLOOR));
                        continue;
                    }
                }
                return Ok(HessianFactor {
                    matrix: damped,
                    chol,
                    damping: applied,
                });
            }
            Err(_) if attempt < 5 => {
                applied = if applied > F::zero() {
                    applied * real::<F>(10.0)
                } else {
                    default_damping.max(real::<F>(HESSIAN_EIG_FLOOR))
                };
            }
            Err(_) => break,
        }
    }
    let cond = max_eigenvalue(&base, 50).to_f64().unwrap_or(f64::INFINITY)
        / applied
            .to_f64()
            .unwrap_or(f64::MIN_POSITIVE)
            .max(f64::MIN_POSITIVE);
    Err(Error::Factorization {
        cond_estimate: cond,
    })
}

fn log1p_exp<F: Real>(eta: F) -> F {
    if eta > F::zero() {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn sigmoid<F: Real>(eta: F) -> F {
    if eta >= F::zero() {
        F::one() / (F::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (F::one() + e)
    }
}

/// Logistic regression by damped IRLS with an L2 ridge.
///
/// The ridge is floored at `1e-6` so separable data yields a finite fit;
/// a non-converged fit is returned with `converged = false`.
pub fn fit_logistic<'a, F: Real>(
    points: impl IntoIterator<Item = (&'a [F], bool)>,
    fm: FeatureMap,
    ridge: F,
) -> Result<LogisticModel<F>> {
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for (x, label) in points {
        flat.extend(fm.expand(x)?);
        labels.push(label);
    }
    let n = labels.len();
    let d = fm.d_out;
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::DegenerateLabels);
    }
    if n < d + 1 {
        log::warn!("logistic fit with {n} samples and {d} features may be unstable");
    }
    let phi = Array2::from_shape_vec((n, d), flat).expect("rectangular design");
    let y = Array1::from_iter(labels.iter().map(|&l| if l { F::one() } else { F::zero() }));
    let ridge = ridge.max(real::<F>(LOGISTIC_MIN_RIDGE));
    let half = real::<F>(0.5);

    let objective = |beta: &Array1<F>| -> F {
        let eta = phi.dot(beta);
        let nll = eta
            .iter()
            .zip(y.iter())
            .map(|(&e, &yi)| log1p_exp(e) - yi * e)
            .fold(F::zero(), |a, b| a + b);
        nll + half * ridge * beta.dot(beta)
    };

    let mut beta = Array1::<F>::zeros(d);
    let mut converged = false;
    let mut iterations = 0;
    let tol = real::<F>(LOGISTIC_TOL);
    for iter in 1..=LOGISTIC_MAX_ITER {
        iterations = iter;
        let eta = phi.dot(&beta);
        let p = eta.mapv(sigmoid);
        let grad = phi.t().dot(&(&p - &y)) + &beta.mapv(|b| b * ridge);
        let grad_norm = grad.dot(&grad).sqrt();
        if grad_norm <= tol {
            converged = true;
            iterations = iter - 1;
            break;
        }
        // ΦᵀWΦ + ridge·I with W = p(1-p).
        let w = p.mapv(|pi| pi * (F::one() - pi));
        let mut info = Array2::<F>::zeros((d, d));
        for i in 0..n {
            let wi = w[i];
            for a in 0..d {
                let pa = phi[(i, a)] * wi;
                for b in a..d {
                    info[(a, b)] += pa * phi[(i, b)];
                }
            }
        }
        for a in 0..d {
            info[(a, a)] += ridge;
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let chol = Cholesky::new(&info)?;
        let step = chol.solve(&grad);
        // Backtracking keeps the penalized deviance monotone; the slack
        // admits full Newton steps once changes fall below float resolution.
        let f0 = objective(&beta);
        let slack = real::<F>(1e-10) * (F::one() + f0.abs());
        let mut t = F::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta - &step.mapv(|s| s * t);
            if objective(&cand) <= f0 + slack {
                beta = cand;
                accepted = true;
                break;
            }
            t *= half;
        }
        if !accepted {
            break;
        }
    }
    Ok(LogisticModel {
        beta: beta.to_vec(),
        fm,
        converged,
        iterations,
    })
}

/// Predicted probability, clipped to `[1e-3, 1 - 1e-3]`.
pub fn predict_prob<F: Real>(model: &LogisticModel<F>, x: &[F]) -> Result<F> {
    let phi = model.fm.expand(x)?;
    Ok(clip_prob(sigmoid(dot(&model.beta, &phi))))
}
