//! Compare the sensitivity model's bias estimate against the shift actually
//! produced by dropping an observed covariate group.
//!
//! The covariate group plays the part of the unobserved confounder: its
//! influence (alpha, R²) is measured from leave-group-out refits and fed into
//! the bias formula on the reduced frame, while the nonparametric bias is the
//! change in the effect estimate when the group is dropped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{counts_to_rows, percentile_interval, resample_counts, BootstrapConfig};
use crate::calibration::{calibrate, LeaveOutPredictions};
use crate::error::{Error, Result};
use crate::frame::{Estimand, PredictionFrame};
use crate::models::{CrossFitter, Dataset, FitConfig, GroupSpec};
use crate::sensitivity::{delta_from_r2, mean_bracket, tau_hat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservatismReport {
    pub group: String,
    pub estimand: Estimand,
    /// Estimate with every covariate.
    pub tau_full: f64,
    /// Estimate with the group removed.
    pub tau_without: f64,
    /// `tau_full - tau_without`.
    pub nonparametric_bias: f64,
    /// Bias the sensitivity model assigns to a confounder with the group's
    /// measured influence.
    pub sensitivity_bias: f64,
    pub alpha_hat: f64,
    pub r2_hat: f64,
    /// Percentile interval for `|sensitivity_bias| - |nonparametric_bias|`.
    pub difference_interval: Option<(f64, f64)>,
}

impl ConservatismReport {
    pub fn is_conservative(&self) -> bool {
        self.sensitivity_bias.abs() >= self.nonparametric_bias.abs()
    }

    /// True when the bootstrap interval for the difference in magnitudes
    /// covers zero. False without an interval.
    pub fn agrees_within_interval(&self) -> bool {
        self.difference_interval.is_some_and(|(lo, hi)| lo <= 0.0 && 0.0 <= hi)
    }
}

struct Parts {
    tau_full: f64,
    tau_without: f64,
    sensitivity_bias: f64,
    alpha_hat: f64,
    r2_hat: f64,
}

fn leave_out_from(group: &str, frame: &PredictionFrame) -> Result<LeaveOutPredictions> {
    let q = (0..frame.len()).map(|i| frame.q_observed(i)).collect();
    LeaveOutPredictions::new(group, frame.y().to_vec(), frame.t().to_vec(), frame.g().to_vec(), q)
}

fn evaluate(full: &PredictionFrame, without: &PredictionFrame, group: &str, estimand: Estimand) -> Result<Parts> {
    let dot = calibrate(full, &leave_out_from(group, without)?)?;
    let alpha = dot.alpha_hat.min(1.0 - 1e-12);
    let sensitivity_bias = if alpha <= 0.0 || dot.r2_hat <= 0.0 {
        0.0
    } else {
        let delta = delta_from_r2(dot.r2_hat.min(1.0), alpha, without)?;
        delta * mean_bracket(without, estimand, alpha)?
    };
    Ok(Parts {
        tau_full: tau_hat(full, estimand)?,
        tau_without: tau_hat(without, estimand)?,
        sensitivity_bias,
        alpha_hat: dot.alpha_hat,
        r2_hat: dot.r2_hat,
    })
}

/// Run the experiment for the single group in `groups`. With a bootstrap
/// config, rows of both cross-fit frames are resampled jointly (no refits)
/// to get an interval for the difference in bias magnitudes.
pub fn conservatism_experiment(
    data: &Dataset,
    cfg: &FitConfig,
    groups: &GroupSpec,
    estimand: Estimand,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<ConservatismReport> {
    groups.validate(data)?;
    if groups.groups.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "conservatism experiment takes exactly one group, got {}",
            groups.groups.len()
        )));
    }
    let (name, cols) = groups.groups.iter().next().expect("one group");
    let fitter = CrossFitter::new(data, cfg)?;
    let full = fitter.full_frame()?;
    let without = fitter.frame_without(cols)?;
    let p = evaluate(&full, &without, name, estimand)?;

    let difference_interval = match bootstrap {
        None => None,
        Some(b) => {
            b.validate()?;
            let diffs = (0..b.replicates as u64)
                .into_par_iter()
                .map(|r| {
                    let (counts, _) = resample_counts(full.t(), b.seed, r, b.max_redraws)?;
                    let rows = counts_to_rows(&counts);
                    let q = evaluate(&full.select(&rows)?, &without.select(&rows)?, name, estimand)?;
                    Ok(q.sensitivity_bias.abs() - (q.tau_full - q.tau_without).abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            Some(percentile_interval(&diffs, b.level))
        }
    };

    Ok(ConservatismReport {
        group: name.clone(),
        estimand,
        tau_full: p.tau_full,
        tau_without: p.tau_without,
        nonparametric_bias: p.tau_full - p.tau_without,
        sensitivity_bias: p.sensitivity_bias,
        alpha_hat: p.alpha_hat,
        r2_hat: p.r2_hat,
        difference_interval,
    })
}
