//! Synthetic data generators for the benchmark scenarios, with the true
//! treatment effect exposed for every configuration.
//!
//! Coefficient draws are materialized once at construction and frozen, so a
//! scenario keeps the same outcome mechanism while replications redraw the
//! data through [`ScenarioConfig::with_seed`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ExternalPool, Sample, TrialDataset};
use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Stream separator between coefficient draws and data draws.
const DATA_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Outcome mechanism of a synthetic scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Linear,
    Nonlinear,
    OneD,
}

/// Fully specified synthetic scenario with frozen coefficient draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig<F> {
    pub mechanism: Mechanism,
    pub d: usize,
    pub n_trial: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub n_pool: usize,
    /// Trial covariate location and scale.
    pub mu1: F,
    pub sigma1: F,
    /// Pool covariate location and scale.
    pub mu2: F,
    pub sigma2: F,
    /// Concurrency-bias level multiplying the time column in pool outcomes.
    pub delta: F,
    /// Amplitude of the nonlinear outcome.
    pub amplitude: F,
    /// Outcome noise standard deviations.
    pub noise_trial: F,
    pub noise_pool: F,
    /// Additive shift applied to pool outcomes (designed violations).
    pub pool_shift: F,
    /// Data seed; replication `r` runs with `seed = base + r`.
    pub seed: u64,
    /// Frozen baseline outcome coefficients (length `d`).
    pub beta: Vec<F>,
    /// Frozen treatment-effect coefficients on `(1, X)` (length `d + 1`).
    pub alpha: Vec<F>,
    /// Frozen multiplicative pool discrepancy (length `d`).
    pub delta_beta: Vec<F>,
}

fn draw_uniform_vec<F: Real>(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<F> {
    (0..n)
        .map(|_| real::<F>(rng.random_range(lo..hi)))
        .collect()
}

impl<F: Real> ScenarioConfig<F> {
    /// Linear mechanism with the benchmark defaults.
    pub fn linear(seed: u64) -> Self {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = draw_uniform_vec(&mut rng, d, -1.0, 1.0);
        let delta_beta = draw_uniform_vec(&mut rng, d, 0.8, 1.2);
        let alpha = draw_uniform_vec(&mut rng, d + 1, -1.0, 1.0);
        Self {
            mechanism: Mechanism::Linear,
            d,
            n_trial: 400,
            n_treated: 300,
            n_control: 100,
            n_pool: 800,
            mu1: F::zero(),
            sigma1: F::one(),
            mu2: real(0.1),
            sigma2: real(2.0),
            delta: real(0.1),
            amplitude: F::one(),
            noise_trial: F::one(),
            noise_pool: real(1.5),
            pool_shift: F::zero(),
            seed,
            beta,
            alpha,
            delta_beta,
        }
    }

    /// Nonlinear (truncated-exponential) mechanism with benchmark defaults.
    pub fn nonlinear(seed: u64) -> Self {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = draw_uniform_vec(&mut rng, d, -1.0, 1.0);
        let delta_beta = draw_uniform_vec(&mut rng, d, 0.8, 1.2);
        let alpha = draw_uniform_vec(&mut rng, d + 1, -0.5, 0.5);
        Self {
            mechanism: Mechanism::Nonlinear,
            d,
            n_trial: 400,
            n_treated: 300,
            n_control: 100,
            n_pool: 800,
            mu1: F::zero(),
            sigma1: F::one(),
            mu2: real(0.1),
            sigma2: real(2.0),
            delta: F::one(),
            amplitude: F::one(),
            noise_trial: F::one(),
            noise_pool: real(2.0),
            pool_shift: F::zero(),
            seed,
            beta,
            alpha,
            delta_beta,
        }
    }

    /// Remove every trial/pool discrepancy except the noise scale: no
    /// concurrency term, identical coefficients, matched covariate law.
    pub fn exchangeable(mut self) -> Self {
        self.delta = F::zero();
        self.delta_beta = vec![F::one(); self.d];
        self.mu2 = self.mu1;
        self.sigma2 = self.sigma1;
        self
    }

    /// Same scenario, new data seed; coefficients stay frozen.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// One-line digest for benchmark outputs.
    pub fn digest(&self) -> String {
        format!(
            "{:?} d={} n_trial={} n_treated={} n_pool={} mu2={} sigma2={} delta={} shift={} seed={}",
            self.mechanism,
            self.d,
            self.n_trial,
            self.n_treated,
            self.n_pool,
            self.mu2,
            self.sigma2,
            self.delta,
            self.pool_shift,
            self.seed
        )
    }

    fn validate(&self) -> Result<()> {
        if self.n_treated + self.n_control != self.n_trial {
            return Err(Error::Invalid(
                "n_treated + n_control must equal n_trial".into(),
            ));
        }
        if self.n_treated == 0 || self.n_control == 0 || self.n_pool == 0 {
            return Err(Error::Invalid("all sample counts must be positive".into()));
        }
        let positive = |v: F| v.partial_cmp(&F::zero()) == Some(std::cmp::Ordering::Greater);
        if !positive(self.sigma1) || !positive(self.sigma2) {
            return Err(Error::Invalid("covariate scales must be positive".into()));
        }
        if self.beta.len() != self.d
            || self.delta_beta.len() != self.d
            || self.alpha.len() != self.d + 1
        {
            return Err(Error::Invalid("coefficient lengths must match d".into()));
        }
        Ok(())
    }

    fn data_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ DATA_STREAM)
    }
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `alpha ⋅ (1, x)`.
fn effect_at<F: Real>(alpha: &[F], x: &[F]) -> F {
    alpha[0] + dot(&alpha[1..], x)
}

/// Treatment mask with exactly `n_treated` treated units, completely at random.
fn draw_assignment(rng: &mut ChaCha8Rng, n: usize, n_treated: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut treated = vec![false; n];
    for &i in &idx[..n_treated] {
        treated[i] = true;
    }
    treated
}

/// Concurrency time column: uniform over {0, 1, 2}.
fn draw_concurrency(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..3u8)).collect()
}

/// Acklam's rational approximation to the standard normal quantile.
fn inv_norm_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inv_norm_cdf(1.0 - p)
    }
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Abramowitz & Stegun 7.1.26.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

/// Draw one truncated-normal coordinate by rejection; falls back to the
/// inverse-CDF transform if rejection stalls.
fn truncated_normal<F: Real>(rng: &mut ChaCha8Rng, mean: F, sd: F, lo: F, hi: F) -> F
where
    StandardNormal: Distribution<F>,
{
    let dist = Normal::new(mean, sd).expect("positive sd");
    for _ in 0..10_000 {
        let v: F = dist.sample(rng);
        if v >= lo && v <= hi {
            return v;
        }
    }
    let m = mean.to_f64().unwrap();
    let s = sd.to_f64().unwrap();
    let a = norm_cdf((lo.to_f64().unwrap() - m) / s);
    let b = norm_cdf((hi.to_f64().unwrap() - m) / s);
    let u: f64 = rng.random_range(a..b).clamp(1e-12, 1.0 - 1e-12);
    real(m + s * inv_norm_cdf(u))
}

/// Linear mechanism: Gaussian covariates, linear outcomes, a concurrency
/// term in the pool.
pub fn gen_linear<F: Real>(cfg: &ScenarioConfig<F>) -> Result<(TrialDataset<F>, ExternalPool<F>)>
where
    StandardNormal: Distribution<F>,
{
    cfg.validate()?;
    if cfg.mechanism != Mechanism::Linear {
        return Err(Error::Invalid("mechanism is not linear".into()));
    }
    let mut rng = cfg.data_rng();
    let x_trial_dist = Normal::new(cfg.mu1, cfg.sigma1).expect("positive sigma1");
    let x_trial: Vec<Vec<F>> = (0..cfg.n_trial)
        .map(|_| (0..cfg.d).map(|_| x_trial_dist.sample(&mut rng)).collect())
        .collect();
    let treated = draw_assignment(&mut rng, cfg.n_trial, cfg.n_treated);
    let eps_trial = Normal::new(F::zero(), cfg.noise_trial).expect("positive noise");
    let trial_samples: Vec<Sample<F>> = x_trial
        .into_iter()
        .zip(treated)
        .map(|(x, a)| {
            let mut y = dot(&cfg.beta, &x) + eps_trial.sample(&mut rng);
            if a {
                y += effect_at(&cfg.alpha, &x);
            }
            Sample::trial(x, a, y)
        })
        .collect();

    let x_pool_dist = Normal::new(cfg.mu2, cfg.sigma2).expect("positive sigma2");
    let x_pool: Vec<Vec<F>> = (0..cfg.n_pool)
        .map(|_| (0..cfg.d).map(|_| x_pool_dist.sample(&mut rng)).collect())
        .collect();
    let t_col = draw_concurrency(&mut rng, cfg.n_pool);
    let eps_pool = Normal::new(F::zero(), cfg.noise_pool).expect("positive noise");
    let shifted_beta: Vec<F> = cfg
        .beta
        .iter()
        .zip(&cfg.delta_beta)
        .map(|(&b, &db)| b * db)
        .collect();
    let pool_samples: Vec<Sample<F>> = x_pool
        .into_iter()
        .zip(t_col)
        .map(|(x, t)| {
            let y = dot(&shifted_beta, &x)
                + cfg.delta * real::<F>(t as f64)
                + eps_pool.sample(&mut rng)
                + cfg.pool_shift;
            Sample::external(x, y)
        })
        .collect();

    Ok((
        TrialDataset::new(trial_samples)?,
        ExternalPool::new(pool_samples)?,
    ))
}

/// Nonlinear mechanism: truncated-normal covariates, exponential outcomes.
pub fn gen_nonlinear<F: Real>(cfg: &ScenarioConfig<F>) -> Result<(TrialDataset<F>, ExternalPool<F>)>
where
    StandardNormal: Distribution<F>,
{
    cfg.validate()?;
    if cfg.mechanism != Mechanism::Nonlinear {
        return Err(Error::Invalid("mechanism is not nonlinear".into()));
    }
    let (t_lo, t_hi) = (real::<F>(-2.0), real::<F>(2.0));
    let (p_lo, p_hi) = (real::<F>(-4.0), real::<F>(4.0));
    let mut rng = cfg.data_rng();
    let x_trial: Vec<Vec<F>> = (0..cfg.n_trial)
        .map(|_| {
            (0..cfg.d)
                .map(|_| truncated_normal(&mut rng, cfg.mu1, cfg.sigma1, t_lo, t_hi))
                .collect()
        })
        .collect();
    let treated = draw_assignment(&mut rng, cfg.n_trial, cfg.n_treated);
    let eps_trial = Normal::new(F::zero(), cfg.noise_trial).expect("positive noise");
    let trial_samples: Vec<Sample<F>> = x_trial
        .into_iter()
        .zip(treated)
        .map(|(x, a)| {
            let mut exponent = dot(&cfg.beta, &x);
            if a {
                exponent += effect_at(&cfg.alpha, &x);
            }
            let y = cfg.amplitude * exponent.exp() + eps_trial.sample(&mut rng);
            Sample::trial(x, a, y)
        })
        .collect();

    let shifted_beta: Vec<F> = cfg
        .beta
        .iter()
        .zip(&cfg.delta_beta)
        .map(|(&b, &db)| b * db)
        .collect();
    let x_pool: Vec<Vec<F>> = (0..cfg.n_pool)
        .map(|_| {
            (0..cfg.d)
                .map(|_| truncated_normal(&mut rng, cfg.mu2, cfg.sigma2, p_lo, p_hi))
                .collect()
        })
        .collect();
    let t_col = draw_concurrency(&mut rng, cfg.n_pool);
    let eps_pool = Normal::new(F::zero(), cfg.noise_pool).expect("positive noise");
    let pool_samples: Vec<Sample<F>> = x_pool
        .into_iter()
        .zip(t_col)
        .map(|(x, t)| {
            let y = cfg.amplitude * dot(&shifted_beta, &x).exp()
                + cfg.delta * real::<F>(t as f64)
                + eps_pool.sample(&mut rng)
                + cfg.pool_shift;
            Sample::external(x, y)
        })
        .collect();

    Ok((
        TrialDataset::new(trial_samples)?,
        ExternalPool::new(pool_samples)?,
    ))
}

/// One-dimensional illustration: trial controls on `y = 2x`, a pool on
/// `y = −1 + 2.5x`, and a handful of gross outliers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneDConfig {
    pub n_control: usize,
    pub n_treated: usize,
    /// Pool samples on the shifted line; outliers are appended after them.
    pub n_pool_regular: usize,
    pub n_outliers: usize,
    pub seed: u64,
}

impl Default for OneDConfig {
    fn default() -> Self {
        Self {
            n_control: 100,
            n_treated: 100,
            n_pool_regular: 795,
            n_outliers: 5,
            seed: 0,
        }
    }
}

/// Generated 1-D scenario with the outlier positions recorded.
#[derive(Debug, Clone)]
pub struct OneDData<F> {
    pub trial: TrialDataset<F>,
    pub pool: ExternalPool<F>,
    /// Pool indices of the injected outliers (the trailing block).
    pub outlier_indices: Vec<usize>,
}

/// The 1-D scenario. The trial treated arm gets a constant unit effect so the
/// full estimation pipeline runs; the borrowing behavior only involves the
/// control arm.
pub fn gen_one_d<F: Real>(cfg: &OneDConfig) -> Result<OneDData<F>>
where
    StandardNormal: Distribution<F>,
{
    if cfg.n_control == 0 || cfg.n_treated == 0 || cfg.n_pool_regular == 0 {
        return Err(Error::Invalid(
            "one-d scenario needs all arms populated".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM);
    let eps_trial = Normal::new(F::zero(), real::<F>(0.2)).unwrap();
    let eps_pool = Normal::new(F::zero(), real::<F>(0.5)).unwrap();
    let two = real::<F>(2.0);

    let mut trial_samples = Vec::with_capacity(cfg.n_control + cfg.n_treated);
    for i in 0..(cfg.n_control + cfg.n_treated) {
        let a = i >= cfg.n_control;
        let x: F = real::<F>(rng.random_range(0.0..2.0));
        let mut y = two * x + eps_trial.sample(&mut rng);
        if a {
            y += F::one();
        }
        trial_samples.push(Sample::trial(vec![x], a, y));
    }

    let mut pool_samples = Vec::with_capacity(cfg.n_pool_regular + cfg.n_outliers);
    for _ in 0..cfg.n_pool_regular {
        let x: F = real::<F>(rng.random_range(0.0..2.0));
        let y = real::<F>(-1.0) + real::<F>(2.5) * x + eps_pool.sample(&mut rng);
        pool_samples.push(Sample::external(vec![x], y));
    }
    for _ in 0..cfg.n_outliers {
        let x: F = real::<F>(rng.random_range(0.0..2.0));
        let eps: F = eps_pool.sample(&mut rng);
        let y = real::<F>(-1.0) + real::<F>(2.5) * x + real::<F>(6.0) * eps.signum();
        pool_samples.push(Sample::external(vec![x], y));
    }
    let outlier_indices = (cfg.n_pool_regular..cfg.n_pool_regular + cfg.n_outliers).collect();

    Ok(OneDData {
        trial: TrialDataset::new(trial_samples)?,
        pool: ExternalPool::new(pool_samples)?,
        outlier_indices,
    })
}

/// Generate the dataset pair for any mechanism.
pub fn generate<F: Real>(cfg: &ScenarioConfig<F>) -> Result<(TrialDataset<F>, ExternalPool<F>)>
where
    StandardNormal: Distribution<F>,
{
    match cfg.mechanism {
        Mechanism::Linear => gen_linear(cfg),
        Mechanism::Nonlinear => gen_nonlinear(cfg),
        Mechanism::OneD => Err(Error::Invalid(
            "one-d scenario is generated through gen_one_d".into(),
        )),
    }
}

/// True average treatment effect of a scenario.
///
/// Linear: closed form `α ⋅ (1, μ₁·1)`. Nonlinear: a seeded Monte Carlo
/// oracle starting at 10⁶ covariate draws and growing until its standard
/// error is below `1e-3 · (|τ| + 1)`.
pub fn true_tau<F: Real>(cfg: &ScenarioConfig<F>) -> Result<F>
where
    StandardNormal: Distribution<F>,
{
    match cfg.mechanism {
        Mechanism::Linear => Ok(true_tau_linear(cfg)),
        Mechanism::Nonlinear => {
            // Grow the draw count until the oracle meets its error budget.
            let mut draws = 1_000_000usize;
            loop {
                let (tau, se) = true_tau_nonlinear_mc(cfg, draws, cfg.seed ^ 0xACE1)?;
                let budget = real::<F>(1e-3) * (tau.abs() + F::one());
                if se <= budget {
                    return Ok(tau);
                }
                if draws >= 64_000_000 {
                    return Err(Error::OracleTooNoisy {
                        se: se.to_f64().unwrap_or(f64::NAN),
                        budget: budget.to_f64().unwrap_or(f64::NAN),
                    });
                }
                draws *= 4;
            }
        }
        Mechanism::OneD => Ok(F::one()),
    }
}

/// Closed-form linear effect: `E[α ⋅ (1, X)]` over the trial covariate law.
pub fn true_tau_linear<F: Real>(cfg: &ScenarioConfig<F>) -> F {
    cfg.alpha[0] + cfg.alpha[1..].iter().fold(F::zero(), |acc, &a| acc + a) * cfg.mu1
}

/// Monte Carlo oracle for the nonlinear effect; returns `(τ, se)`.
pub fn true_tau_nonlinear_mc<F: Real>(
    cfg: &ScenarioConfig<F>,
    draws: usize,
    oracle_seed: u64,
) -> Result<(F, F)>
where
    StandardNormal: Distribution<F>,
{
    cfg.validate()?;
    let (lo, hi) = (real::<F>(-2.0), real::<F>(2.0));
    let mut rng = ChaCha8Rng::seed_from_u64(oracle_seed);
    let mut sum = F::zero();
    let mut sum_sq = F::zero();
    for _ in 0..draws {
        let x: Vec<F> = (0..cfg.d)
            .map(|_| truncated_normal(&mut rng, cfg.mu1, cfg.sigma1, lo, hi))
            .collect();
        let base = dot(&cfg.beta, &x);
        let diff = cfg.amplitude * ((base + effect_at(&cfg.alpha, &x)).exp() - base.exp());
        sum += diff;
        sum_sq += diff * diff;
    }
    let n = F::from_usize(draws).unwrap();
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(F::zero());
    let se = (var / n).sqrt();
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_defaults_match_benchmark_settings() {
        let cfg = ScenarioConfig::<f64>::linear(7);
        assert_eq!(
            (cfg.d, cfg.n_trial, cfg.n_treated, cfg.n_control, cfg.n_pool),
            (8, 400, 300, 100, 800)
        );
        assert_eq!(
            (cfg.mu1, cfg.sigma1, cfg.mu2, cfg.sigma2),
            (0.0, 1.0, 0.1, 2.0)
        );
        assert_eq!(cfg.delta, 0.1);
        assert!(cfg.delta_beta.iter().all(|&v| (0.8..=1.2).contains(&v)));
        assert!(cfg.beta.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        assert_eq!(cfg.alpha.len(), 9);
    }

    #[test]
    fn nonlinear_defaults_and_bounds() {
        let cfg = ScenarioConfig::<f64>::nonlinear(7);
        assert_eq!(cfg.delta, 1.0);
        assert!(cfg.delta_beta.iter().all(|&v| (0.8..=1.2).contains(&v)));
        let (trial, pool) = gen_nonlinear(&cfg).unwrap();
        for s in trial.samples() {
            assert!(s.x.iter().all(|&v| (-2.0..=2.0).contains(&v)));
        }
        for s in pool.samples() {
            assert!(s.x.iter().all(|&v| (-4.0..=4.0).contains(&v)));
        }
    }

    #[test]
    fn seed_determinism() {
        let cfg = ScenarioConfig::<f64>::linear(42);
        let (t1, p1) = gen_linear(&cfg).unwrap();
        let (t2, p2) = gen_linear(&cfg).unwrap();
        assert_eq!(t1.samples(), t2.samples());
        assert_eq!(p1.samples(), p2.samples());
        let (t3, _) = gen_linear(&cfg.with_seed(43)).unwrap();
        assert_ne!(t1.samples(), t3.samples());
    }

    #[test]
    fn with_seed_freezes_coefficients() {
        let cfg = ScenarioConfig::<f64>::linear(42);
        let other = cfg.with_seed(99);
        assert_eq!(cfg.beta, other.beta);
        assert_eq!(cfg.alpha, other.alpha);
        assert_eq!(cfg.delta_beta, other.delta_beta);
    }

    #[test]
    fn covariate_marginals_match_targets() {
        let mut cfg = ScenarioConfig::<f64>::linear(3);
        cfg.n_trial = 4000;
        cfg.n_treated = 3000;
        cfg.n_control = 1000;
        cfg.n_pool = 4000;
        let (trial, pool) = gen_linear(&cfg).unwrap();
        let check = |values: Vec<f64>, mu: f64, sigma: f64| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(
                (mean - mu).abs() < 4.0 * sigma / n.sqrt(),
                "mean {mean} vs {mu}"
            );
            assert!(
                (sd - sigma).abs() < 4.0 * sigma / (2.0 * n).sqrt(),
                "sd {sd} vs {sigma}"
            );
        };
        check(trial.samples().iter().map(|s| s.x[0]).collect(), 0.0, 1.0);
        check(pool.samples().iter().map(|s| s.x[3]).collect(), 0.1, 2.0);
    }

    #[test]
    fn concurrency_column_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = draw_concurrency(&mut rng, 20_000);
        let n = t.len() as f64;
        let mean = t.iter().map(|&v| v as f64).sum::<f64>() / n;
        let se = (2.0 / 3.0_f64).sqrt() / n.sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "mean T = {mean}");
        assert!(t.iter().all(|&v| v <= 2));
    }

    #[test]
    fn exchangeable_pool_matches_trial_controls_up_to_noise() {
        let mut cfg = ScenarioConfig::<f64>::linear(5).exchangeable();
        cfg.n_pool = 2000;
        let (trial, pool) = gen_linear(&cfg).unwrap();
        // Residuals against the true control line.
        let resid =
            |s: &Sample<f64>| s.y - s.x.iter().zip(&cfg.beta).map(|(x, b)| x * b).sum::<f64>();
        let rt: Vec<f64> = trial.controls().map(resid).collect();
        let ec: Vec<f64> = pool.samples().iter().map(resid).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64], m: f64| {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        };
        let (m_rt, m_ec) = (mean(&rt), mean(&ec));
        assert!(m_rt.abs() < 4.0 * 1.0 / (rt.len() as f64).sqrt());
        assert!(m_ec.abs() < 4.0 * 1.5 / (ec.len() as f64).sqrt());
        // KS statistic between standardized residuals: same shape up to scale.
        let mut a: Vec<f64> = rt.iter().map(|v| (v - m_rt) / sd(&rt, m_rt)).collect();
        let mut b: Vec<f64> = ec.iter().map(|v| (v - m_ec) / sd(&ec, m_ec)).collect();
        a.sort_by(|x, y| x.total_cmp(y));
        b.sort_by(|x, y| x.total_cmp(y));
        let mut ks = 0.0_f64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / a.len() as f64;
            let fb = j as f64 / b.len() as f64;
            ks = ks.max((fa - fb).abs());
        }
        let bound = 1.63 * ((a.len() + b.len()) as f64 / (a.len() * b.len()) as f64).sqrt();
        assert!(ks < 1.5 * bound, "ks = {ks}, bound = {bound}");
    }

    #[test]
    fn nonlinear_zero_amplitude_gives_pure_noise() {
        let mut cfg = ScenarioConfig::<f64>::nonlinear(9);
        cfg.amplitude = 0.0;
        cfg.delta = 0.0;
        assert_eq!(true_tau(&cfg).unwrap(), 0.0);
        let (trial, _) = gen_nonlinear(&cfg).unwrap();
        let ys: Vec<f64> = trial.samples().iter().map(|s| s.y).collect();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        assert!(mean.abs() < 4.0 / n.sqrt(), "mean outcome {mean}");
    }

    #[test]
    fn one_d_mechanism_recovery() {
        let data = gen_one_d::<f64>(&OneDConfig::default()).unwrap();
        assert_eq!(data.outlier_indices.len(), 5);
        assert_eq!(data.pool.len(), 800);
        assert_eq!(data.trial.n_control(), 100);
        // Least-squares line through the trial controls: slope near 2.
        let pts: Vec<(f64, f64)> = data.trial.controls().map(|s| (s.x[0], s.y)).collect();
        let (slope, _intercept, se) = ls_line(&pts);
        assert!((slope - 2.0).abs() < 3.0 * se, "slope {slope} pm {se}");
        // Pool line: intercept -1, slope 2.5.
        let regular: Vec<(f64, f64)> = data.pool.samples()[..795]
            .iter()
            .map(|s| (s.x[0], s.y))
            .collect();
        let (pslope, pintercept, pse) = ls_line(&regular);
        assert!((pslope - 2.5).abs() < 3.0 * pse, "pool slope {pslope}");
        assert!(
            (pintercept + 1.0).abs() < 0.2,
            "pool intercept {pintercept}"
        );
    }

    /// Simple least squares with the slope's standard error.
    fn ls_line(pts: &[(f64, f64)]) -> (f64, f64, f64) {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let rss = pts
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum::<f64>();
        let se = (rss / (n - 2.0) / sxx).sqrt();
        (slope, intercept, se)
    }

    #[test]
    fn true_tau_linear_cases() {
        let mut cfg = ScenarioConfig::<f64>::linear(1);
        cfg.alpha = vec![0.0; 9];
        assert_eq!(true_tau(&cfg).unwrap(), 0.0);
        cfg.alpha = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        cfg.mu1 = 0.0;
        assert_eq!(true_tau(&cfg).unwrap(), 1.0);
        // Nonzero covariate mean folds into the effect.
        cfg.alpha = vec![1.0; 9];
        cfg.mu1 = 0.5;
        assert!((true_tau(&cfg).unwrap() - (1.0 + 8.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_oracle_reproducible() {
        let cfg = ScenarioConfig::<f64>::nonlinear(11);
        let (t1, s1) = true_tau_nonlinear_mc(&cfg, 200_000, 100).unwrap();
        let (t2, s2) = true_tau_nonlinear_mc(&cfg, 200_000, 200).unwrap();
        let combined = (s1 * s1 + s2 * s2).sqrt();
        assert!(
            (t1 - t2).abs() < 4.0 * combined,
            "t1 {t1} t2 {t2} se {combined}"
        );
    }

    #[test]
    fn inverse_cdf_matches_cdf() {
        for &p in &[0.001, 0.01, 0.1, 0.5, 0.9, 0.99, 0.999] {
            let x = inv_norm_cdf(p);
            assert!((norm_cdf(x) - p).abs() < 1e-4, "p {p} -> x {x}");
        }
    }
}
