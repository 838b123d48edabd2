//! Per-sample influence of external controls on the trial-control outcome
//! model: first-order scores, the exact-retraining oracle, and the nested
//! Top-K candidate subsets.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ExternalPool, FeatureMap, Sample};
use crate::error::{Error, Result};
use crate::models::{fit_ridge, grad_loss, HessianFactor, RidgeModel};
use crate::scalar::Real;

/// Scores and ascending-score ordering for an external pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfluenceRanking<F> {
    /// Nonnegative influence score per pool index.
    pub scores: Vec<F>,
    /// Pool indices sorted by ascending score; ties keep pool order.
    pub order: Vec<usize>,
    /// Tie-breaking rule used by the sort.
    pub ties_broken_by: &'static str,
}

impl<F: Real> InfluenceRanking<F> {
    fn from_scores(scores: Vec<F>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[a]
                .partial_cmp(&scores[b])
                .expect("finite scores")
                .then(a.cmp(&b))
        });
        Self {
            scores,
            order,
            ties_broken_by: "pool-index",
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// First-order parameter shift from upweighting `z`: `−H⁻¹ ∇L(z, θ̂)`.
pub fn influence_params<F: Real>(
    model: &RidgeModel<F>,
    h: &HessianFactor<F>,
    z: &Sample<F>,
) -> Result<Array1<F>> {
    let g = grad_loss(model, z)?;
    Ok(h.solve(&g).mapv(|v| -v))
}

/// First-order change of the loss at trial control `zi` when `z` is added:
/// `−∇L(zi)ᵀ H⁻¹ ∇L(z)`.
pub fn influence_loss_pair<F: Real>(
    model: &RidgeModel<F>,
    h: &HessianFactor<F>,
    z: &Sample<F>,
    zi: &Sample<F>,
) -> Result<F> {
    let gi = grad_loss(model, zi)?;
    let gz = grad_loss(model, z)?;
    Ok(-gi.dot(&h.solve(&gz)))
}

/// Stacked control gradients, reused across all pool points.
fn gradient_stack<'a, F: Real>(
    model: &RidgeModel<F>,
    controls: impl IntoIterator<Item = &'a Sample<F>>,
) -> Result<Array2<F>> {
    let mut flat = Vec::new();
    let mut n = 0;
    for zi in controls {
        flat.extend(grad_loss(model, zi)?);
        n += 1;
    }
    Ok(Array2::from_shape_vec((n, model.fm.d_out), flat).expect("rectangular gradient stack"))
}

fn score_against_stack<F: Real>(
    model: &RidgeModel<F>,
    h: &HessianFactor<F>,
    stack: &Array2<F>,
    z: &Sample<F>,
) -> Result<F> {
    let gz = grad_loss(model, z)?;
    let v = h.solve(&gz);
    Ok(stack.dot(&v).iter().fold(F::zero(), |acc, t| acc + t.abs()))
}

/// Total first-order influence of `z` on the trial-control losses:
/// `Σ_i |∇L(Z_i)ᵀ H⁻¹ ∇L(z)|`, one Hessian solve per `z`.
pub fn influence_score<'a, F: Real>(
    model: &RidgeModel<F>,
    h: &HessianFactor<F>,
    controls: impl IntoIterator<Item = &'a Sample<F>>,
    z: &Sample<F>,
) -> Result<F> {
    let stack = gradient_stack(model, controls)?;
    score_against_stack(model, h, &stack, z)
}

/// Exact-retraining influence: refit with `z` included at unit weight and
/// return `Σ_i |L(Z_i, θ̂₊) − L(Z_i, θ̂)|`.
///
/// Serves as the oracle for [`influence_score`].
pub fn exact_influence<F: Real>(
    controls: &[Sample<F>],
    lambda_reg: F,
    fm: FeatureMap,
    z: &Sample<F>,
) -> Result<F> {
    let base = fit_ridge(controls.iter(), lambda_reg, fm)?;
    let refit = fit_ridge(controls.iter().chain(std::iter::once(z)), lambda_reg, fm)?;
    let mut total = F::zero();
    for zi in controls {
        total += (refit.loss(zi)? - base.loss(zi)?).abs();
    }
    Ok(total)
}

/// Score every pool sample and sort ascending (most comparable first).
pub fn rank_pool<'a, F: Real>(
    model: &RidgeModel<F>,
    h: &HessianFactor<F>,
    controls: impl IntoIterator<Item = &'a Sample<F>>,
    pool: &ExternalPool<F>,
) -> Result<InfluenceRanking<F>> {
    let stack = gradient_stack(model, controls)?;
    let scores: Vec<F> = pool
        .samples()
        .par_iter()
        .map(|z| score_against_stack(model, h, &stack, z))
        .collect::<Result<_>>()?;
    Ok(InfluenceRanking::from_scores(scores))
}

/// The Top-K prefix of the influence ordering.
pub fn nested_set<F: Real>(ranking: &InfluenceRanking<F>, k: usize) -> Result<Vec<usize>> {
    if k > ranking.order.len() {
        return Err(Error::KOutOfRange {
            k,
            max: ranking.order.len(),
        });
    }
    Ok(ranking.order[..k].to_vec())
}
