use std::ops::{Add, Div, Mul, Neg, Sub};

use super::special;

/// Scalar arithmetic shared by plain `f64` evaluation and taped [`super::Var`]s.
///
/// Model and objective code is written once against this trait: evaluation
/// runs on `f64`, training runs the same code on a tape.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living wherever `self` lives (same tape for vars).
    fn lift(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn square(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// `self.atan2(x)` is the angle of the point (x, self).
    fn atan2(self, x: Self) -> Self;
    fn softplus(self) -> Self;
    fn lgamma(self) -> Self;
    fn digamma(self) -> Self;
    fn log_bessel_i0(self) -> Self;
    fn bessel_ratio(self) -> Self;

    fn sigmoid(self) -> Self {
        (-(-self).softplus()).exp()
    }
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, c: f64) -> Self {
        c
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn square(self) -> Self {
        self * self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn softplus(self) -> Self {
        special::softplus(self)
    }
    fn lgamma(self) -> Self {
        special::lgamma(self)
    }
    fn digamma(self) -> Self {
        special::digamma(self)
    }
    fn log_bessel_i0(self) -> Self {
        special::log_bessel_i0(self)
    }
    fn bessel_ratio(self) -> Self {
        special::bessel_ratio(self)
    }
    fn sigmoid(self) -> Self {
        special::sigmoid(self)
    }
}

/// Numerically stable ln Σ exp(xᵢ). The shift is treated as a constant,
/// which leaves the gradient unchanged.
pub fn log_sum_exp<R: Real>(xs: &[R]) -> R {
    assert!(!xs.is_empty(), "log_sum_exp of an empty slice");
    let m = xs
        .iter()
        .map(|x| x.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = if m.is_finite() { m } else { 0.0 };
    let mut acc = (xs[0] - shift).exp();
    for &x in &xs[1..] {
        acc = acc + (x - shift).exp();
    }
    acc.ln() + shift
}

pub fn sum<R: Real>(xs: &[R]) -> R {
    let mut it = xs.iter().copied();
    let first = it.next().expect("sum of an empty slice");
    it.fold(first, |a, b| a + b)
}

/// Σ wᵢ xᵢ + b for parameters `w`, `b` and fixed inputs `x`.
pub fn affine<R: Real>(w: &[R], x: &[f64], b: R) -> R {
    debug_assert_eq!(w.len(), x.len());
    w.iter().zip(x).fold(b, |acc, (&wi, &xi)| acc + wi * xi)
}

/// Σ wᵢ xᵢ + b where both weights and inputs are differentiable.
pub fn dot_plus<R: Real>(w: &[R], x: &[R], b: R) -> R {
    debug_assert_eq!(w.len(), x.len());
    w.iter().zip(x).fold(b, |acc, (&wi, &xi)| acc + wi * xi)
}
