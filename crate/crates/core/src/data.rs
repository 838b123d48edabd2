//! Observed-data model: trial samples, external control pools, and the
//! feature expansion used by every parametric fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One observation: covariates, treatment, outcome, and source indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<F> {
    /// Covariate vector of length `d`.
    pub x: Vec<F>,
    /// Treatment indicator.
    pub a: bool,
    /// Observed outcome.
    pub y: F,
    /// Source indicator: `true` for trial, `false` for external control.
    pub r: bool,
}

impl<F: Real> Sample<F> {
    pub fn trial(x: Vec<F>, a: bool, y: F) -> Self {
        Self { x, a, y, r: true }
    }

    /// External controls are untreated by construction.
    pub fn external(x: Vec<F>, y: F) -> Self {
        Self {
            x,
            a: false,
            y,
            r: false,
        }
    }

    fn check_finite(&self) -> Result<()> {
        if !self.y.is_finite() {
            return Err(Error::NonFinite {
                what: "outcome".into(),
            });
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "covariate".into(),
            });
        }
        Ok(())
    }
}

/// Randomized trial data: both arms populated, shared covariate dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialDataset<F> {
    samples: Vec<Sample<F>>,
    d: usize,
    n_treated: usize,
    n_control: usize,
}

impl<F: Real> TrialDataset<F> {
    pub fn new(samples: Vec<Sample<F>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyArm { arm: "trial" });
        }
        let d = samples[0].x.len();
        let mut n_treated = 0;
        let mut n_control = 0;
        for s in &samples {
            if !s.r {
                return Err(Error::Invalid("trial sample with r = 0".into()));
            }
            if s.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.x.len(),
                });
            }
            s.check_finite()?;
            if s.a {
                n_treated += 1;
            } else {
                n_control += 1;
            }
        }
        if n_treated == 0 {
            return Err(Error::EmptyArm { arm: "treated" });
        }
        if n_control == 0 {
            return Err(Error::EmptyArm { arm: "control" });
        }
        Ok(Self {
            samples,
            d,
            n_treated,
            n_control,
        })
    }

    pub fn samples(&self) -> &[Sample<F>] {
        &self.samples
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.n_treated
    }

    pub fn n_control(&self) -> usize {
        self.n_control
    }

    /// Trial control arm, in dataset order.
    pub fn controls(&self) -> impl Iterator<Item = &Sample<F>> {
        self.samples.iter().filter(|s| !s.a)
    }

    /// Trial treated arm, in dataset order.
    pub fn treated(&self) -> impl Iterator<Item = &Sample<F>> {
        self.samples.iter().filter(|s| s.a)
    }

    /// Keep the treated arm and the control samples at `control_rows`
    /// (positions within the control arm, any order; original order kept).
    pub fn subsample_controls(&self, control_rows: &[usize]) -> Result<Self> {
        let controls: Vec<&Sample<F>> = self.controls().collect();
        if control_rows.len() > controls.len() {
            return Err(Error::SubsampleTooLarge {
                requested: control_rows.len(),
                available: controls.len(),
            });
        }
        let mut keep = vec![false; controls.len()];
        for &row in control_rows {
            if row >= controls.len() {
                return Err(Error::IndexOutOfRange {
                    index: row,
                    len: controls.len(),
                });
            }
            if keep[row] {
                return Err(Error::DuplicateIndex { index: row });
            }
            keep[row] = true;
        }
        let mut kept_controls = keep.iter();
        let samples = self
            .samples
            .iter()
            .filter(|s| s.a || *kept_controls.next().expect("control count"))
            .cloned()
            .collect();
        Self::new(samples)
    }
}

/// External controls: untreated samples from outside the trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalPool<F> {
    samples: Vec<Sample<F>>,
    d: usize,
}

impl<F: Real> ExternalPool<F> {
    pub fn new(samples: Vec<Sample<F>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyPool);
        }
        let d = samples[0].x.len();
        for s in &samples {
            if s.r {
                return Err(Error::Invalid("external sample with r = 1".into()));
            }
            if s.a {
                return Err(Error::Invalid("treated external sample".into()));
            }
            if s.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.x.len(),
                });
            }
            s.check_finite()?;
        }
        Ok(Self { samples, d })
    }

    pub fn samples(&self) -> &[Sample<F>] {
        &self.samples
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Trial data plus an ordered borrowed subset of the pool.
#[derive(Debug, Clone)]
pub struct CombinedDataset<'a, F> {
    pub trial: &'a TrialDataset<F>,
    pub pool: &'a ExternalPool<F>,
    /// Borrowed pool indices, in the order they were requested.
    pub borrowed: Vec<usize>,
    /// Trial fraction of the combined population.
    pub q_hat: F,
}

impl<'a, F: Real> CombinedDataset<'a, F> {
    /// All combined samples: trial first, then borrowed in stored order.
    pub fn iter(&self) -> impl Iterator<Item = &Sample<F>> {
        self.trial
            .samples()
            .iter()
            .chain(self.borrowed.iter().map(|&j| &self.pool.samples()[j]))
    }

    pub fn len(&self) -> usize {
        self.trial.len() + self.borrowed.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Report produced by [`validate`]: empty means the pair is consistent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check a trial/pool pair for dimension agreement and arm structure.
///
/// Report-style: violations are collected, not raised.
pub fn validate<F: Real>(trial: &TrialDataset<F>, pool: &ExternalPool<F>) -> ValidationReport {
    let mut violations = Vec::new();
    if trial.d() != pool.d() {
        violations.push(format!(
            "dimension mismatch: trial d={}, pool d={}",
            trial.d(),
            pool.d()
        ));
    }
    if trial.n_treated() == 0 {
        violations.push("empty treated arm".into());
    }
    if trial.n_control() == 0 {
        violations.push("empty control arm".into());
    }
    for (i, s) in pool.samples().iter().enumerate() {
        if s.a {
            violations.push(format!("treated external sample at pool index {i}"));
        }
    }
    for (i, s) in trial.samples().iter().chain(pool.samples()).enumerate() {
        if !s.y.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
            violations.push(format!("non-finite value at combined row {i}"));
        }
    }
    ValidationReport { violations }
}

/// Merge a trial with a borrowed subset of the pool.
///
/// `q_hat = N_trial / (N_trial + |indices|)`; ordering is trial first, then
/// borrowed samples in the given index order.
pub fn combine<'a, F: Real>(
    trial: &'a TrialDataset<F>,
    pool: &'a ExternalPool<F>,
    indices: &[usize],
) -> Result<CombinedDataset<'a, F>> {
    check_borrowed_indices(indices, pool.len())?;
    let n_trial = trial.len();
    let q_hat = F::from_usize(n_trial).unwrap() / F::from_usize(n_trial + indices.len()).unwrap();
    Ok(CombinedDataset {
        trial,
        pool,
        borrowed: indices.to_vec(),
        q_hat,
    })
}

/// Validate a borrowed index list: in range and free of duplicates.
pub fn check_borrowed_indices(indices: &[usize], pool_len: usize) -> Result<()> {
    let mut seen = vec![false; pool_len];
    for &j in indices {
        if j >= pool_len {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: pool_len,
            });
        }
        if seen[j] {
            return Err(Error::DuplicateIndex { index: j });
        }
        seen[j] = true;
    }
    Ok(())
}

/// Basis choice for the parametric models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// Intercept plus raw covariates.
    LinearWithIntercept,
    /// Intercept plus per-covariate monomials up to the given degree
    /// (no cross terms).
    Polynomial(usize),
}

/// Deterministic feature expansion from covariates to model features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kind: BasisKind,
    pub d_in: usize,
    pub d_out: usize,
}

impl FeatureMap {
    pub fn new(kind: BasisKind, d_in: usize) -> Self {
        let d_out = match kind {
            BasisKind::LinearWithIntercept => 1 + d_in,
            BasisKind::Polynomial(degree) => 1 + d_in * degree.max(1),
        };
        Self { kind, d_in, d_out }
    }

    pub fn linear(d_in: usize) -> Self {
        Self::new(BasisKind::LinearWithIntercept, d_in)
    }

    pub fn polynomial(degree: usize, d_in: usize) -> Self {
        Self::new(BasisKind::Polynomial(degree), d_in)
    }

    /// Expand covariates into the model basis. The first entry is always the
    /// constant 1.
    pub fn expand<F: Real>(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                got: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.d_out);
        out.push(F::one());
        match self.kind {
            BasisKind::LinearWithIntercept => out.extend_from_slice(x),
            BasisKind::Polynomial(degree) => {
                let degree = degree.max(1);
                for p in 1..=degree {
                    for &v in x {
                        out.push(v.powi(p as i32));
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), self.d_out);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_trial(d: usize, n_treated: usize, n_control: usize) -> TrialDataset<f64> {
        let mut samples = Vec::new();
        for i in 0..n_treated {
            samples.push(Sample::trial(vec![i as f64; d], true, 1.0));
        }
        for i in 0..n_control {
            samples.push(Sample::trial(vec![i as f64; d], false, 0.0));
        }
        TrialDataset::new(samples).unwrap()
    }

    fn toy_pool(d: usize, n: usize) -> ExternalPool<f64> {
        ExternalPool::new(
            (0..n)
                .map(|i| Sample::external(vec![i as f64; d], 0.5))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn validate_consistent_inputs() {
        let report = validate(&toy_trial(8, 5, 5), &toy_pool(8, 4));
        assert!(report.is_ok());
    }

    #[test]
    fn validate_flags_treated_external_sample() {
        let mut samples: Vec<Sample<f64>> = (0..3)
            .map(|i| Sample::external(vec![i as f64], 0.0))
            .collect();
        samples[1].a = true;
        // Construct the pool bypassing the constructor's own check.
        let pool = ExternalPool { samples, d: 1 };
        let report = validate(&toy_trial(1, 2, 2), &pool);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("treated external sample")));
    }

    #[test]
    fn trial_requires_both_arms() {
        let samples: Vec<Sample<f64>> = (0..4)
            .map(|i| Sample::trial(vec![i as f64], true, 1.0))
            .collect();
        assert!(matches!(
            TrialDataset::new(samples),
            Err(Error::EmptyArm { arm: "control" })
        ));
    }

    #[test]
    fn combine_q_hat_arithmetic() {
        let trial = toy_trial(2, 300, 100);
        let pool = toy_pool(2, 400);
        let indices: Vec<usize> = (0..100).collect();
        let combined = combine(&trial, &pool, &indices).unwrap();
        assert_eq!(combined.q_hat, 0.8);
        assert_eq!(combined.len(), 500);
    }

    #[test]
    fn combine_empty_is_identity() {
        let trial = toy_trial(2, 3, 3);
        let pool = toy_pool(2, 4);
        let combined = combine(&trial, &pool, &[]).unwrap();
        assert_eq!(combined.q_hat, 1.0);
        assert_eq!(combined.iter().count(), trial.len());
    }

    #[test]
    fn combine_full_psid_sized_pool() {
        // 345-sample trial with a 123-sample pool, all borrowed.
        let trial = toy_trial(8, 185, 160);
        assert_eq!(trial.len(), 345);
        let pool = toy_pool(8, 123);
        let indices: Vec<usize> = (0..123).collect();
        let combined = combine(&trial, &pool, &indices).unwrap();
        assert_eq!(combined.q_hat, 345.0 / 468.0);
    }

    #[test]
    fn combine_rejects_bad_indices() {
        let trial = toy_trial(2, 2, 2);
        let pool = toy_pool(2, 4);
        assert!(matches!(
            combine(&trial, &pool, &[5]),
            Err(Error::IndexOutOfRange { index: 5, len: 4 })
        ));
        assert!(matches!(
            combine(&trial, &pool, &[1, 1]),
            Err(Error::DuplicateIndex { index: 1 })
        ));
    }

    #[test]
    fn expand_linear() {
        let fm = FeatureMap::linear(2);
        assert_eq!(fm.expand(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn expand_polynomial() {
        let fm = FeatureMap::polynomial(2, 1);
        assert_eq!(fm.expand(&[2.0]).unwrap(), vec![1.0, 2.0, 4.0]);
        let fm = FeatureMap::polynomial(2, 2);
        assert_eq!(
            fm.expand(&[1.0, -1.0]).unwrap(),
            vec![1.0, 1.0, -1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn expand_rejects_dimension_mismatch() {
        let fm = FeatureMap::linear(2);
        assert!(fm.expand(&[1.0]).is_err());
    }

    #[test]
    fn subsample_keeps_treated_arm() {
        let trial = toy_trial(1, 3, 5);
        let sub = trial.subsample_controls(&[0, 2, 4]).unwrap();
        assert_eq!(sub.n_treated(), 3);
        assert_eq!(sub.n_control(), 3);
        let xs: Vec<f64> = sub.controls().map(|s| s.x[0]).collect();
        assert_eq!(xs, vec![0.0, 2.0, 4.0]);
    }

    proptest! {
        #[test]
        fn expand_dimension_and_determinism(
            x in proptest::collection::vec(-10.0_f64..10.0, 1..6),
            degree in 1_usize..4,
        ) {
            let fm = FeatureMap::polynomial(degree, x.len());
            let a = fm.expand(&x).unwrap();
            let b = fm.expand(&x).unwrap();
            prop_assert_eq!(a.len(), fm.d_out);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a[0], 1.0);
        }

        #[test]
        fn combine_order_preserved(perm in proptest::sample::subsequence((0..20usize).collect::<Vec<_>>(), 0..20)) {
            let trial = toy_trial(1, 2, 2);
            let pool = toy_pool(1, 20);
            let combined = combine(&trial, &pool, &perm).unwrap();
            prop_assert_eq!(&combined.borrowed, &perm);
            let expected_q = trial.len() as f64 / (trial.len() + perm.len()) as f64;
            prop_assert_eq!(combined.q_hat, expected_q);
        }
    }
}
