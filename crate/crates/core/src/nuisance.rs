//! Fits the nuisance functions consumed by the estimators: propensity and
//! sampling scores, outcome regressions on the trial arms, the pooled-control
//! regression, and the external-pool regression used by the bias baseline.

use serde::{Deserialize, Serialize};

use crate::data::{check_borrowed_indices, BasisKind, ExternalPool, FeatureMap, TrialDataset};
use crate::error::{Error, Result};
use crate::models::{fit_logistic, fit_ridge, predict_prob, LogisticModel, RidgeModel};
use crate::scalar::{clip_prob, real, Real};

/// Propensity score in the trial: the known randomization constant or a
/// logistic fit of treatment on covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Propensity<F> {
    Known(F),
    Fitted(LogisticModel<F>),
}

/// Sampling score over trial ∪ borrowed: identically 1 when nothing is
/// borrowed, otherwise a logistic fit of the source indicator on covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SamplingScore<F> {
    NoBorrow,
    Fitted(LogisticModel<F>),
}

/// Configuration for one round of nuisance fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig<F> {
    /// Basis for the outcome regressions (mu0, mu1, m0, mu0_ext).
    pub outcome_basis: BasisKind,
    /// Ridge strength for the outcome regressions.
    pub ridge_lambda: F,
    /// Basis for the logistic scores (e1 when fitted, pi).
    pub score_basis: BasisKind,
    /// L2 ridge for the logistic fits.
    pub logistic_ridge: F,
    /// Treatment completely at random: e1 is the arm fraction.
    pub randomized: bool,
}

impl<F: Real> Default for FitConfig<F> {
    fn default() -> Self {
        Self {
            outcome_basis: BasisKind::LinearWithIntercept,
            ridge_lambda: real(1e-4),
            score_basis: BasisKind::LinearWithIntercept,
            logistic_ridge: real(1e-6),
            randomized: true,
        }
    }
}

impl<F: Real> FitConfig<F> {
    /// Second-degree polynomial outcome basis, for the nonlinear mechanism.
    pub fn polynomial(degree: usize) -> Self {
        Self {
            outcome_basis: BasisKind::Polynomial(degree),
            ..Self::default()
        }
    }
}

/// The fitted nuisance bundle for a trial and a borrowed subset.
#[derive(Debug, Clone)]
pub struct NuisanceSet<F> {
    pub e1: Propensity<F>,
    pub pi: SamplingScore<F>,
    pub mu0: RidgeModel<F>,
    pub mu1: RidgeModel<F>,
    pub m0: RidgeModel<F>,
    /// Outcome regression on the full external pool (lasso baseline input).
    pub mu0_ext: Option<RidgeModel<F>>,
    pub q_hat: F,
}

impl<F: Real> NuisanceSet<F> {
    /// `m1` is `mu1` by definition.
    pub fn m1(&self) -> &RidgeModel<F> {
        &self.mu1
    }

    /// Trial propensity at `x`, clipped.
    pub fn e1_at(&self, x: &[F]) -> Result<F> {
        match &self.e1 {
            Propensity::Known(p) => Ok(clip_prob(*p)),
            Propensity::Fitted(model) => predict_prob(model, x),
        }
    }

    /// Sampling score at `x`: exactly 1 with no borrowing, else clipped.
    pub fn pi_at(&self, x: &[F]) -> Result<F> {
        match &self.pi {
            SamplingScore::NoBorrow => Ok(F::one()),
            SamplingScore::Fitted(model) => predict_prob(model, x),
        }
    }
}

/// Combined-population propensity `e_S(x) = e1(x) π(x)`, clipped into
/// `[eps, 1 − eps]` so both inverse weights stay bounded.
pub fn e_s<F: Real>(ns: &NuisanceSet<F>, x: &[F]) -> Result<F> {
    Ok(clip_prob(ns.e1_at(x)? * ns.pi_at(x)?))
}

/// Fit every nuisance for the given borrowed subset.
///
/// Borrowed indices are consumed in sorted order, so all fits (and therefore
/// every downstream estimate) are invariant to the order of the index list.
pub fn fit_nuisances<F: Real>(
    trial: &TrialDataset<F>,
    pool: Option<&ExternalPool<F>>,
    borrowed: &[usize],
    cfg: &FitConfig<F>,
) -> Result<NuisanceSet<F>> {
    let pool_len = pool.map_or(0, ExternalPool::len);
    check_borrowed_indices(borrowed, pool_len)?;
    let mut borrowed_sorted = borrowed.to_vec();
    borrowed_sorted.sort_unstable();

    let fm_out = FeatureMap::new(cfg.outcome_basis, trial.d());
    let fm_score = FeatureMap::new(cfg.score_basis, trial.d());

    let mu0 = fit_ridge(trial.controls(), cfg.ridge_lambda, fm_out)?;
    let mu1 = fit_ridge(trial.treated(), cfg.ridge_lambda, fm_out)?;

    let (m0, pi) = if borrowed_sorted.is_empty() {
        (mu0.clone(), SamplingScore::NoBorrow)
    } else {
        let pool = pool.expect("borrowed indices checked against pool length");
        let borrowed_samples = borrowed_sorted.iter().map(|&j| &pool.samples()[j]);
        let m0 = fit_ridge(
            trial.controls().chain(borrowed_samples.clone()),
            cfg.ridge_lambda,
            fm_out,
        )?;
        let points = trial
            .samples()
            .iter()
            .chain(borrowed_samples)
            .map(|s| (s.x.as_slice(), s.r));
        let pi = fit_logistic(points, fm_score, cfg.logistic_ridge)?;
        (m0, SamplingScore::Fitted(pi))
    };

    let e1 = if cfg.randomized {
        Propensity::Known(
            F::from_usize(trial.n_treated()).unwrap() / F::from_usize(trial.len()).unwrap(),
        )
    } else {
        let points = trial.samples().iter().map(|s| (s.x.as_slice(), s.a));
        Propensity::Fitted(fit_logistic(points, fm_score, cfg.logistic_ridge)?)
    };

    let mu0_ext = match pool {
        Some(p) => Some(fit_ridge(p.samples().iter(), cfg.ridge_lambda, fm_out)?),
        None => None,
    };

    let n_trial = trial.len();
    let q_hat =
        F::from_usize(n_trial).unwrap() / F::from_usize(n_trial + borrowed_sorted.len()).unwrap();

    if borrowed_sorted.is_empty() && q_hat != F::one() {
        return Err(Error::Invalid("q_hat must be 1 without borrowing".into()));
    }

    Ok(NuisanceSet {
        e1,
        pi,
        mu0,
        mu1,
        m0,
        mu0_ext,
        q_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic_trial(
        rng: &mut ChaCha8Rng,
        n_treated: usize,
        n_control: usize,
    ) -> TrialDataset<f64> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut samples = Vec::new();
        for i in 0..(n_treated + n_control) {
            let x: Vec<f64> = (0..2).map(|_| normal.sample(rng)).collect();
            let a = i < n_treated;
            let y = x[0] - 0.5 * x[1] + if a { 1.0 } else { 0.0 } + 0.3 * normal.sample(rng);
            samples.push(Sample::trial(x, a, y));
        }
        TrialDataset::new(samples).unwrap()
    }

    fn synthetic_pool(rng: &mut ChaCha8Rng, n: usize) -> ExternalPool<f64> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        ExternalPool::new(
            (0..n)
                .map(|_| {
                    let x: Vec<f64> = (0..2).map(|_| normal.sample(rng)).collect();
                    let y = x[0] - 0.5 * x[1] + 0.3 * normal.sample(rng);
                    Sample::external(x, y)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn no_borrowing_collapse() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let trial = synthetic_trial(&mut rng, 30, 30);
        let pool = synthetic_pool(&mut rng, 20);
        let ns = fit_nuisances(&trial, Some(&pool), &[], &FitConfig::default()).unwrap();
        assert!(matches!(ns.pi, SamplingScore::NoBorrow));
        assert_eq!(ns.q_hat, 1.0);
        assert_eq!(ns.m0.theta, ns.mu0.theta);
        let x = [0.4, -1.2];
        assert_eq!(ns.pi_at(&x).unwrap(), 1.0);
        assert_eq!(e_s(&ns, &x).unwrap(), ns.e1_at(&x).unwrap());
    }

    #[test]
    fn randomized_propensity_is_arm_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let trial = synthetic_trial(&mut rng, 300, 100);
        let ns = fit_nuisances(&trial, None, &[], &FitConfig::default()).unwrap();
        assert_eq!(ns.e1_at(&[0.0, 0.0]).unwrap(), 0.75);
    }

    #[test]
    fn sampling_score_tracks_trial_fraction_under_no_shift() {
        // Pool drawn from the same law as the trial: mean fitted pi over the
        // combined set should sit near q_hat.
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let trial = synthetic_trial(&mut rng, 150, 150);
        let pool = synthetic_pool(&mut rng, 300);
        let borrowed: Vec<usize> = (0..pool.len()).collect();
        let ns = fit_nuisances(&trial, Some(&pool), &borrowed, &FitConfig::default()).unwrap();
        let pis: Vec<f64> = trial
            .samples()
            .iter()
            .chain(pool.samples())
            .map(|s| ns.pi_at(&s.x).unwrap())
            .collect();
        let n = pis.len() as f64;
        let mean = pis.iter().sum::<f64>() / n;
        let sd = (pis.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mc_se = sd / n.sqrt() + 0.5 / n.sqrt();
        assert!(
            (mean - ns.q_hat).abs() < 3.0 * mc_se,
            "mean pi {mean}, q_hat {}",
            ns.q_hat
        );
    }

    #[test]
    fn e_s_products_and_clipping() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let trial = synthetic_trial(&mut rng, 300, 100);
        let mut ns = fit_nuisances(&trial, None, &[], &FitConfig::default()).unwrap();
        assert_eq!(e_s(&ns, &[0.0, 0.0]).unwrap(), 0.75);

        // e1 = 0.5, pi = 0.5 -> e_s = 0.25.
        ns.e1 = Propensity::Known(0.5);
        ns.pi = SamplingScore::Fitted(LogisticModel {
            beta: vec![0.0, 0.0, 0.0],
            fm: FeatureMap::linear(2),
            converged: true,
            iterations: 0,
        });
        assert_eq!(e_s(&ns, &[0.0, 0.0]).unwrap(), 0.25);

        // pi pushed to the floor: product clips at eps.
        ns.pi = SamplingScore::Fitted(LogisticModel {
            beta: vec![-100.0, 0.0, 0.0],
            fm: FeatureMap::linear(2),
            converged: true,
            iterations: 0,
        });
        assert_eq!(e_s(&ns, &[0.0, 0.0]).unwrap(), 1e-3);
    }

    #[test]
    fn m1_is_mu1() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let trial = synthetic_trial(&mut rng, 40, 40);
        let pool = synthetic_pool(&mut rng, 30);
        let ns = fit_nuisances(&trial, Some(&pool), &[0, 5, 7], &FitConfig::default()).unwrap();
        assert_eq!(ns.m1().theta, ns.mu1.theta);
        for _ in 0..10 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            assert_eq!(ns.m1().predict(&x).unwrap(), ns.mu1.predict(&x).unwrap());
        }
    }

    #[test]
    fn fits_invariant_to_borrowed_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let trial = synthetic_trial(&mut rng, 40, 40);
        let pool = synthetic_pool(&mut rng, 30);
        let a = fit_nuisances(&trial, Some(&pool), &[3, 17, 9, 25], &FitConfig::default()).unwrap();
        let b = fit_nuisances(&trial, Some(&pool), &[25, 3, 9, 17], &FitConfig::default()).unwrap();
        assert_eq!(a.m0.theta, b.m0.theta);
        match (&a.pi, &b.pi) {
            (SamplingScore::Fitted(pa), SamplingScore::Fitted(pb)) => {
                assert_eq!(pa.beta, pb.beta)
            }
            _ => panic!("expected fitted sampling scores"),
        }
    }

    #[test]
    fn probabilities_respect_clipping() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let trial = synthetic_trial(&mut rng, 40, 40);
        let pool = synthetic_pool(&mut rng, 60);
        let borrowed: Vec<usize> = (0..pool.len()).collect();
        let cfg = FitConfig {
            randomized: false,
            ..FitConfig::default()
        };
        let ns = fit_nuisances(&trial, Some(&pool), &borrowed, &cfg).unwrap();
        for s in trial.samples().iter().chain(pool.samples()) {
            let es = e_s(&ns, &s.x).unwrap();
            assert!((1e-3..=1.0 - 1e-3).contains(&es));
            let e1 = ns.e1_at(&s.x).unwrap();
            assert!((1e-3..=1.0 - 1e-3).contains(&e1));
        }
    }
}
