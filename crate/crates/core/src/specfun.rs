//! Digamma and trigamma functions on the positive real axis.
//!
//! Both use upward recurrence until the argument clears [`ASYMPTOTIC_MIN`]
//! and then the Bernoulli-number asymptotic series. Arguments produced by
//! the sensitivity model range from ~1e-6 (extreme propensities, alpha near
//! one) to ~1e8 (alpha near zero), so the recurrence must handle both ends.

use crate::error::{Error, Result};

/// Below this the argument is shifted up by recurrence.
const ASYMPTOTIC_MIN: f64 = 10.0;

/// `B_2k / (2k)` for k = 1..=7.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// `B_2k` for k = 1..=7.
const TRIGAMMA_SERIES: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

fn check_domain(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} requires a finite positive argument, got {x}"
        )))
    }
}

/// Digamma function ψ(x) = d/dx ln Γ(x) for finite `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_domain("digamma", x)?;
    Ok(digamma_unchecked(x))
}

/// Trigamma function ψ₁(x) = d²/dx² ln Γ(x) for finite `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_domain("trigamma", x)?;
    Ok(trigamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    if x < 1.0 {
        // ψ(x) = ψ(x + 1) - 1/x with the reciprocal's rounding error
        // carried separately, so the large 1/x term is rounded only once.
        let recip = 1.0 / x;
        let err = (-recip).mul_add(x, 1.0) / x;
        return (digamma_shifted(x + 1.0) - err) - recip;
    }
    digamma_shifted(x)
}

fn digamma_shifted(x: f64) -> f64 {
    let mut x = x;
    let mut shift = 0.0;
    // ψ(x) = ψ(x + 1) - 1/x
    while x < ASYMPTOTIC_MIN {
        shift += 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut poly = 0.0;
    for &c in DIGAMMA_SERIES.iter().rev() {
        poly = poly * inv2 + c;
    }
    x.ln() - 0.5 / x - poly * inv2 - shift
}

pub(crate) fn trigamma_unchecked(x: f64) -> f64 {
    let mut x = x;
    let mut shift = 0.0;
    // ψ₁(x) = ψ₁(x + 1) + 1/x²
    while x < ASYMPTOTIC_MIN {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut poly = 0.0;
    for &c in TRIGAMMA_SERIES.iter().rev() {
        poly = poly * inv2 + c;
    }
    shift + inv + 0.5 * inv2 + poly * inv2 * inv
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082;

    #[test]
    fn digamma_reference_points() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-15);
        assert!((digamma(2.0).unwrap() - (1.0 - EULER_GAMMA)).abs() < 1e-15);
        assert!((digamma(0.5).unwrap() - -1.963_510_026_021_423_5).abs() < 1e-14);
    }

    #[test]
    fn trigamma_reference_points() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0).unwrap() - pi2 / 6.0).abs() < 1e-14);
        assert!((trigamma(0.5).unwrap() - pi2 / 2.0).abs() < 1e-14);
        assert!((trigamma(2.0).unwrap() - (pi2 / 6.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_arguments() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            assert!(matches!(digamma(x), Err(Error::Domain(_))), "{x}");
            assert!(matches!(trigamma(x), Err(Error::Domain(_))), "{x}");
        }
    }

    #[test]
    fn threshold_continuity() {
        // both sides of the recurrence switch-over
        let below = 10.0 - 1e-12;
        assert!((digamma_unchecked(below) - digamma_unchecked(10.0)).abs() < 1e-11);
        assert!((trigamma_unchecked(below) - trigamma_unchecked(10.0)).abs() < 1e-12);
    }
}
