//! Special functions for the quantizer and the randomness tests.

use core::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::math;

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;

/// Complementary error function.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Regularized upper incomplete gamma `Q(a, x) = Gamma(a, x) / Gamma(a)`.
///
/// Series for the lower function when `x < a + 1`, Lentz continued fraction
/// otherwise.
pub fn igamc(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "igamc needs a > 0");
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        (1.0 - lower_series(a, x)).clamp(0.0, 1.0)
    } else {
        upper_fraction(a, x).clamp(0.0, 1.0)
    }
}

/// Regularized lower incomplete gamma `P(a, x) = 1 - Q(a, x)`.
pub fn igam(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "igam needs a > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        lower_series(a, x).clamp(0.0, 1.0)
    } else {
        (1.0 - upper_fraction(a, x)).clamp(0.0, 1.0)
    }
}

fn prefactor(a: f64, x: f64) -> f64 {
    math::exp(-x + a * math::ln(x) - ln_gamma(a))
}

fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * prefactor(a, x)
}

fn upper_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    prefactor(a, x) * h
}

// Rational approximation coefficients for the normal quantile (P. J. Acklam).
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
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
const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];

/// Standard normal quantile `z` with `Phi(z) = p`.
///
/// Rational approximation (relative error ~1e-9) followed by one Halley step on
/// `Phi(z) - p`, which brings it to near machine precision.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(alloc::format!("probability {p} outside (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = math::sqrt(-2.0 * math::ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = math::sqrt(-2.0 * math::ln(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * math::sqrt(2.0 * PI) * math::exp(x * x / 2.0);
    Ok(x - u / (1.0 + x * u / 2.0))
}
