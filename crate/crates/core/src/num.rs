//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that does geometry or statistics is written against [`Scalar`]
//! so the same code runs in `f32` (compact, e.g. for batch scoring) and `f64`
//! (the default used by the file formats and the CLI).

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable by the layout engine.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + std::iter::Sum
    + 'static
{
    /// Converts an `f64` literal. Lossy for `f32`, which is the point.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Complementary error function evaluated to full precision of the type.
    fn erfc(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// Standard normal CDF, computed through `erfc` so both tails keep their
/// relative precision.
#[inline]
pub fn normal_cdf<F: Scalar>(z: F) -> F {
    F::lit(0.5) * (-z * F::FRAC_1_SQRT_2()).erfc()
}

/// Standard normal density.
#[inline]
pub fn normal_pdf<F: Scalar>(z: F) -> F {
    let inv_sqrt_2pi = F::FRAC_1_SQRT_2() * F::FRAC_2_SQRT_PI() * F::lit(0.5);
    inv_sqrt_2pi * (-(z * z) * F::lit(0.5)).exp()
}

/// Probability mass of N(0, 1) on `[lo, hi]`.
///
/// Uses the upper tail when both bounds are positive, which avoids
/// cancellation of two numbers close to one.
#[inline]
pub fn normal_mass<F: Scalar>(lo: F, hi: F) -> F {
    if lo > F::zero() {
        normal_cdf(-lo) - normal_cdf(-hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    }
}
