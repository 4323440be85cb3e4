//! Bias and partial-R² formulas of the Beta–Bernoulli sensitivity model.
//!
//! With `M = 1/alpha - 1`, the complete propensity of a unit with observed
//! propensity `g` is `Beta(g M, (1 - g) M)`. Conditioning on treatment shifts
//! one shape parameter by one, which gives the digamma bracket used for the
//! bias and the trigamma sum used for the variance of `logit g̃`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{AlphaGrid, Estimand, PredictionFrame};
use crate::specfun::{digamma_unchecked, trigamma_unchecked};

/// Strength of the confounder's relationship with the outcome, in one of its
/// two parameterizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeInfluence {
    /// Outcome units per unit of `logit g̃`.
    Delta(f64),
    /// Share of residual outcome variance explained by the confounder.
    PartialR2(f64),
}

/// A hypothetical confounder: treatment influence `alpha` plus an outcome
/// influence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityParams {
    alpha: f64,
    outcome: OutcomeInfluence,
}

impl SensitivityParams {
    pub fn with_delta(alpha: f64, delta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !delta.is_finite() {
            return Err(Error::Domain(format!("delta must be finite, got {delta}")));
        }
        Ok(Self {
            alpha,
            outcome: OutcomeInfluence::Delta(delta),
        })
    }

    pub fn with_r2(alpha: f64, r2: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(0.0..1.0).contains(&r2) {
            return Err(Error::Domain(format!(
                "partial R² must lie in [0, 1), got {r2}"
            )));
        }
        Ok(Self {
            alpha,
            outcome: OutcomeInfluence::PartialR2(r2),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn outcome(&self) -> OutcomeInfluence {
        self.outcome
    }

    /// The delta form, converting a partial R² through [`delta_from_r2`].
    pub fn delta(&self, frame: &PredictionFrame) -> Result<f64> {
        match self.outcome {
            OutcomeInfluence::Delta(d) => Ok(d),
            OutcomeInfluence::PartialR2(r2) => delta_from_r2(r2, self.alpha, frame),
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_propensity(g: f64) -> Result<()> {
    if g > 0.0 && g < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("propensity must lie in (0, 1), got {g}")))
    }
}

/// Beta concentration `1/alpha - 1`.
pub(crate) fn concentration(alpha: f64) -> f64 {
    1.0 / alpha - 1.0
}

/// Plug-in effect estimate: mean of `q1 - q0` over all rows (ATE) or the
/// treated rows (ATT).
pub fn tau_hat(frame: &PredictionFrame, estimand: Estimand) -> Result<f64> {
    let effects = (0..frame.len())
        .filter(|&i| estimand == Estimand::Ate || frame.t()[i])
        .map(|i| frame.q1()[i] - frame.q0()[i]);
    let (sum, count) = effects.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        return Err(Error::Degenerate(format!(
            "no rows available for the {estimand} estimate"
        )));
    }
    Ok(sum / count as f64)
}

/// `E[logit g̃ | T=1] - E[logit g̃ | T=0]` for one unit:
/// `ψ(gM+1) - ψ((1-g)M) - ψ(gM) + ψ((1-g)M+1)`.
pub fn digamma_bracket(g: f64, alpha: f64) -> Result<f64> {
    check_propensity(g)?;
    check_alpha(alpha)?;
    Ok(bracket_unchecked(g, concentration(alpha)))
}

pub(crate) fn bracket_unchecked(g: f64, m: f64) -> f64 {
    let a = g * m;
    let b = (1.0 - g) * m;
    digamma_unchecked(a + 1.0) - digamma_unchecked(b) - digamma_unchecked(a)
        + digamma_unchecked(b + 1.0)
}

/// `var(logit g̃ | X, T) = ψ₁(gM + t) + ψ₁((1-g)M + 1 - t)`.
pub fn trigamma_variance_term(g: f64, t: bool, alpha: f64) -> Result<f64> {
    check_propensity(g)?;
    check_alpha(alpha)?;
    Ok(variance_unchecked(g, t, concentration(alpha)))
}

pub(crate) fn variance_unchecked(g: f64, t: bool, m: f64) -> f64 {
    let shift = if t { 1.0 } else { 0.0 };
    trigamma_unchecked(g * m + shift) + trigamma_unchecked((1.0 - g) * m + 1.0 - shift)
}

/// Mean of the digamma bracket over the estimand's rows.
pub(crate) fn mean_bracket(frame: &PredictionFrame, estimand: Estimand, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let m = concentration(alpha);
    shifted_mean(
        (0..frame.len())
            .filter(|&i| estimand == Estimand::Ate || frame.t()[i])
            .map(|i| bracket_unchecked(frame.g()[i], m)),
    )
    .ok_or_else(|| Error::Degenerate(format!("no rows available for the {estimand} bias")))
}

/// Mean taken around the first value, so a constant sequence averages to
/// exactly that constant whatever its length.
pub(crate) fn shifted_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut values = values.peekable();
    let first = *values.peek()?;
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + (v - first), c + 1));
    Some(first + sum / count as f64)
}

/// Mean of the logit-variance term over all rows.
pub(crate) fn mean_variance(frame: &PredictionFrame, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let m = concentration(alpha);
    shifted_mean((0..frame.len()).map(|i| variance_unchecked(frame.g()[i], frame.t()[i], m)))
        .ok_or_else(|| Error::Degenerate("empty frame".into()))
}

fn residual_scale(frame: &PredictionFrame) -> Result<f64> {
    let mse = frame.mean_sq_residual();
    if mse > 0.0 {
        Ok(mse)
    } else {
        Err(Error::Degenerate(
            "outcome residuals y - Q(t, x) are identically zero".into(),
        ))
    }
}

/// Bias `tau - ATE` induced by the confounder. Linear in delta.
pub fn bias(params: &SensitivityParams, frame: &PredictionFrame, estimand: Estimand) -> Result<f64> {
    let delta = params.delta(frame)?;
    Ok(delta * mean_bracket(frame, estimand, params.alpha)?)
}

/// Partial R² of the confounder for the outcome. Always averaged over all
/// rows, whatever the estimand.
pub fn r2_par(params: &SensitivityParams, frame: &PredictionFrame) -> Result<f64> {
    match params.outcome {
        OutcomeInfluence::PartialR2(r2) => Ok(r2),
        OutcomeInfluence::Delta(delta) => {
            let mse = residual_scale(frame)?;
            Ok(delta * delta * mean_variance(frame, params.alpha)? / mse)
        }
    }
}

/// Nonnegative delta whose partial R² at `alpha` equals `r2`.
pub fn delta_from_r2(r2: f64, alpha: f64, frame: &PredictionFrame) -> Result<f64> {
    if !(0.0..=1.0).contains(&r2) {
        return Err(Error::Domain(format!(
            "partial R² must lie in [0, 1], got {r2}"
        )));
    }
    let mse = residual_scale(frame)?;
    let var = mean_variance(frame, alpha)?;
    if var <= 0.0 {
        return Err(Error::Domain(format!(
            "logit variance vanished at alpha={alpha}"
        )));
    }
    Ok((r2 * mse / var).sqrt())
}

/// One point of a bias contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    /// Partial R², capped at 1 when infeasible.
    pub r2: f64,
    pub feasible: bool,
}

/// The set of (alpha, partial R²) pairs inducing a fixed bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCurve {
    pub target_bias: f64,
    pub estimand: Estimand,
    pub points: Vec<CurvePoint>,
}

impl BiasCurve {
    pub fn alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.alpha)
    }

    pub fn has_feasible_point(&self) -> bool {
        self.points.iter().any(|p| p.feasible)
    }
}

/// Partial R² needed at one alpha, from the three per-alpha averages.
pub(crate) fn contour_r2(target: f64, mean_bracket: f64, mean_variance: f64, mse: f64) -> f64 {
    let delta = target / mean_bracket;
    delta * delta * mean_variance / mse
}

pub(crate) fn curve_point(alpha: f64, r2: f64) -> CurvePoint {
    if r2 > 1.0 {
        CurvePoint {
            alpha,
            r2: 1.0,
            feasible: false,
        }
    } else {
        CurvePoint {
            alpha,
            r2,
            feasible: true,
        }
    }
}

pub(crate) fn check_target(target_bias: f64) -> Result<f64> {
    if target_bias.is_finite() && target_bias != 0.0 {
        Ok(target_bias.abs())
    } else {
        Err(Error::InvalidInput(format!(
            "target bias must be positive and finite, got {target_bias}"
        )))
    }
}

/// For each alpha, the partial R² at which the confounder induces a bias of
/// `|target_bias|`. Points needing R² > 1 are kept, flagged infeasible.
pub fn bias_contour(
    target_bias: f64,
    frame: &PredictionFrame,
    estimand: Estimand,
    grid: &AlphaGrid,
) -> Result<BiasCurve> {
    let target = check_target(target_bias)?;
    let mse = residual_scale(frame)?;
    let points = grid
        .values()
        .iter()
        .map(|&alpha| {
            let r2 = contour_r2(
                target,
                mean_bracket(frame, estimand, alpha)?,
                mean_variance(frame, alpha)?,
                mse,
            );
            Ok(curve_point(alpha, r2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasCurve {
        target_bias: target,
        estimand,
        points,
    })
}
