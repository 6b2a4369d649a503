//! Special functions used by the fitting engines and the test.
//!
//! Everything here is a pure function of its arguments.

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Scale and degrees of freedom of a scaled chi-square `kappa * chi2(nu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChiSqParams {
    pub kappa: f64,
    pub nu: f64,
}

impl ChiSqParams {
    pub fn new(kappa: f64, nu: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Domain { what: "chi-square scale must be positive", value: kappa });
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Domain { what: "chi-square degrees of freedom must be positive", value: nu });
        }
        Ok(Self { kappa, nu })
    }

    /// `P[kappa * chi2(nu) > stat]`.
    pub fn sf(&self, stat: f64) -> Result<f64> {
        chisq_sf((stat / self.kappa).max(0.0), self.nu)
    }
}

/// Which side of the truncation a Mills ratio refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// `phi(x) / Phi(x)`: mean shift of a normal truncated to `[-x, inf)` after centering.
    Upper,
    /// `phi(x) / (1 - Phi(x))`.
    Lower,
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain { what: "log_gamma requires a positive finite argument", value: x });
    }
    Ok(libm::lgamma(x))
}

pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// `ln Phi(x)`, accurate far into the lower tail.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        libm::log1p(-0.5 * libm::erfc(x * core::f64::consts::FRAC_1_SQRT_2))
    } else {
        libm::log(0.5 * erfcx(-x * core::f64::consts::FRAC_1_SQRT_2)) - 0.5 * x * x
    }
}

/// Scaled complementary error function `exp(u^2) erfc(u)`.
pub fn erfcx(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    if u < 0.0 {
        // erfc(-u) = 2 - erfc(u)
        if u < -26.6 {
            return f64::INFINITY;
        }
        return 2.0 * libm::exp(u * u) - erfcx(-u);
    }
    if u < 8.0 {
        return libm::exp(u * u) * libm::erfc(u);
    }
    // Continued fraction 1/(u + (1/2)/(u + 1/(u + (3/2)/(u + ...)))), evaluated backwards.
    let mut tail = u;
    for k in (1..=60).rev() {
        tail = u + 0.5 * k as f64 / tail;
    }
    FRAC_1_SQRT_PI / tail
}

/// Inverse Mills ratio. `Upper` is `phi(x)/Phi(x)`, `Lower` is
/// `phi(x)/(1 - Phi(x))`. Both are computed through [`erfcx`] in the tail
/// where the naive ratio underflows to `0/0`.
pub fn inverse_mills(x: f64, tail: Tail) -> f64 {
    match tail {
        Tail::Upper => upper_mills(x),
        Tail::Lower => upper_mills(-x),
    }
}

fn upper_mills(x: f64) -> f64 {
    if x >= 0.0 {
        std_normal_pdf(x) / std_normal_cdf(x)
    } else {
        SQRT_2_OVER_PI / erfcx(-x * core::f64::consts::FRAC_1_SQRT_2)
    }
}

/// Regularized upper incomplete gamma function `Q(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain { what: "incomplete gamma shape must be positive", value: a });
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain { what: "incomplete gamma argument must be non-negative", value: x });
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefix = -x + a * libm::log(x) - libm::lgamma(a);
    if x < a + 1.0 {
        Ok((1.0 - libm::exp(log_prefix) * lower_series(a, x)).clamp(0.0, 1.0))
    } else {
        Ok((libm::exp(log_prefix) * upper_fraction(a, x)).clamp(0.0, 1.0))
    }
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

// sum_{k>=0} x^k / (a (a+1) ... (a+k))
fn lower_series(a: f64, x: f64) -> f64 {
    let mut denom = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum
}

// Lentz evaluation of the continued fraction for Γ(a, x) e^x x^{-a}.
fn upper_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    h
}

/// Survival function of a chi-square with (possibly fractional) `nu` degrees
/// of freedom: `Q(nu/2, x/2)`.
pub fn chisq_sf(x: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain { what: "chi-square degrees of freedom must be positive", value: nu });
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain { what: "chi-square quantile must be non-negative", value: x });
    }
    regularized_gamma_q(0.5 * nu, 0.5 * x)
}
