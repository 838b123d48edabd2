//! Scalar abstraction for the numerical core.
//!
//! Everything downstream is generic over [`Real`], so the same estimators run
//! in `f32` or `f64`. The test suites and the CLI use `f64`.

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::distr::uniform::SampleUniform;

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + SampleUniform
    + std::iter::Sum<Self>
    + for<'a> std::iter::Sum<&'a Self>
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + ScalarOperand
        + SampleUniform
        + std::iter::Sum<Self>
        + for<'a> std::iter::Sum<&'a Self>
        + std::fmt::Debug
        + std::fmt::Display
        + Default
        + serde::Serialize
        + serde::de::DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn real<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 constant must convert to the scalar type")
}

/// Probability floor used wherever inverse-probability weights appear.
///
/// Predicted probabilities are clamped to `[EPS_CLIP, 1 - EPS_CLIP]`.
pub const EPS_CLIP: f64 = 1e-3;

/// Clamp a probability to the clipping interval.
#[inline]
pub fn clip_prob<F: Real>(p: F) -> F {
    let lo = real::<F>(EPS_CLIP);
    let hi = F::one() - lo;
    if p < lo {
        lo
    } else if p > hi {
        hi
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_bounds() {
        assert_eq!(clip_prob(0.5_f64), 0.5);
        assert_eq!(clip_prob(0.0_f64), 1e-3);
        assert_eq!(clip_prob(1.0_f64), 1.0 - 1e-3);
        assert_eq!(clip_prob(-3.0_f64), 1e-3);
    }

    #[test]
    fn real_works_for_f32() {
        let x: f32 = real(0.25);
        assert_eq!(x, 0.25_f32);
    }
}
