//! Influence of observed covariate groups, measured on the same scale as a
//! hypothetical confounder.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{clip_propensity, PredictionFrame};

/// Predictions from models refit without one covariate group.
///
/// `y` and `t` are carried along so row alignment with the full-model frame
/// can be checked.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOutPredictions {
    group: String,
    y: Vec<f64>,
    t: Vec<bool>,
    g_wo: Vec<f64>,
    q_wo: Vec<f64>,
    clipped: usize,
}

impl LeaveOutPredictions {
    /// `q_wo` holds the leave-out outcome prediction at each row's observed
    /// treatment.
    pub fn new(
        group: impl Into<String>,
        y: Vec<f64>,
        t: Vec<bool>,
        g_wo: Vec<f64>,
        q_wo: Vec<f64>,
    ) -> Result<Self> {
        let group = group.into();
        let n = y.len();
        if t.len() != n || g_wo.len() != n || q_wo.len() != n {
            return Err(Error::InvalidInput(format!(
                "leave-out columns for group `{group}` differ in length"
            )));
        }
        for (name, col) in [("y", &y), ("g_wo", &g_wo), ("q_wo", &q_wo)] {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "group `{group}`: non-finite `{name}` at row {i}"
                )));
            }
        }
        if let Some(i) = g_wo.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(format!(
                "group `{group}`: g_wo={} at row {i} lies outside [0, 1]",
                g_wo[i]
            )));
        }
        let mut clipped = 0;
        let g_wo = g_wo
            .into_iter()
            .map(|v| {
                let (c, hit) = clip_propensity(v);
                clipped += usize::from(hit);
                c
            })
            .collect();
        Ok(Self {
            group,
            y,
            t,
            g_wo,
            q_wo,
            clipped,
        })
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[bool] {
        &self.t
    }

    pub fn g_wo(&self) -> &[f64] {
        &self.g_wo
    }

    pub fn q_wo(&self) -> &[f64] {
        &self.q_wo
    }

    pub fn clipped_rows(&self) -> usize {
        self.clipped
    }

    /// Same rows in a new order (repeats allowed).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let pick = |col: &[f64]| rows.iter().map(|&i| col[i]).collect::<Vec<_>>();
        Self::new(
            self.group.clone(),
            pick(&self.y),
            rows.iter().map(|&i| self.t[i]).collect(),
            pick(&self.g_wo),
            pick(&self.q_wo),
        )
    }

    fn check_aligned(&self, frame: &PredictionFrame) -> Result<()> {
        if self.len() != frame.len() {
            return Err(Error::InvalidInput(format!(
                "group `{}` has {} rows but the prediction frame has {}",
                self.group,
                self.len(),
                frame.len()
            )));
        }
        let mismatch = (0..self.len()).find(|&i| self.y[i] != frame.y()[i] || self.t[i] != frame.t()[i]);
        if let Some(i) = mismatch {
            return Err(Error::InvalidInput(format!(
                "group `{}`: row {i} does not match the prediction frame's y/t",
                self.group
            )));
        }
        Ok(())
    }
}

/// A calibration dot: estimated influence of one observed covariate group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateInfluence {
    pub group: String,
    pub alpha_hat: f64,
    pub r2_hat: f64,
    pub alpha_raw: f64,
    pub r2_raw: f64,
    pub clipped: bool,
}

impl CovariateInfluence {
    pub fn from_raw(group: impl Into<String>, alpha_raw: f64, r2_raw: f64) -> Self {
        Self {
            group: group.into(),
            alpha_hat: alpha_raw.max(0.0),
            r2_hat: r2_raw.max(0.0),
            alpha_raw,
            r2_raw,
            clipped: alpha_raw < 0.0 || r2_raw < 0.0,
        }
    }
}

fn weighted_mean(weights: Option<&[f64]>, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    match weights {
        None => (0..n).map(&f).sum::<f64>() / n as f64,
        Some(w) => {
            let total: f64 = w.iter().sum();
            (0..n).map(|i| w[i] * f(i)).sum::<f64>() / total
        }
    }
}

pub(crate) fn r2_raw_weighted(
    frame: &PredictionFrame,
    lo: &LeaveOutPredictions,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let n = frame.len();
    let mse_wo = weighted_mean(weights, n, |i| (frame.y()[i] - lo.q_wo[i]).powi(2));
    if mse_wo <= 0.0 {
        return Err(Error::Degenerate(format!(
            "group `{}`: leave-out residuals are identically zero",
            lo.group
        )));
    }
    let mse = weighted_mean(weights, n, |i| frame.residual(i).powi(2));
    Ok((mse_wo - mse) / mse_wo)
}

pub(crate) fn alpha_raw_weighted(
    frame: &PredictionFrame,
    lo: &LeaveOutPredictions,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let n = frame.len();
    let var_wo = weighted_mean(weights, n, |i| lo.g_wo[i] * (1.0 - lo.g_wo[i]));
    if var_wo <= 0.0 {
        return Err(Error::Degenerate(format!(
            "group `{}`: leave-out propensities have no Bernoulli variance",
            lo.group
        )));
    }
    let var = weighted_mean(weights, n, |i| frame.g()[i] * (1.0 - frame.g()[i]));
    Ok(1.0 - var / var_wo)
}

/// Outcome influence: relative drop in mean squared residual when the group
/// is added back. Raw value may be negative; `r2_hat` clips it at zero.
pub fn r2_observed(frame: &PredictionFrame, lo: &LeaveOutPredictions) -> Result<f64> {
    lo.check_aligned(frame)?;
    r2_raw_weighted(frame, lo, None)
}

/// Treatment influence: one minus the ratio of mean Bernoulli variances of
/// the full and leave-out propensities.
pub fn alpha_observed(frame: &PredictionFrame, lo: &LeaveOutPredictions) -> Result<f64> {
    lo.check_aligned(frame)?;
    alpha_raw_weighted(frame, lo, None)
}

/// Both influence estimates for one group.
pub fn calibrate(frame: &PredictionFrame, lo: &LeaveOutPredictions) -> Result<CovariateInfluence> {
    Ok(CovariateInfluence::from_raw(
        lo.group.clone(),
        alpha_observed(frame, lo)?,
        r2_observed(frame, lo)?,
    ))
}

/// Calibration dots for several groups, in input order.
pub fn calibrate_groups(
    frame: &PredictionFrame,
    groups: &[LeaveOutPredictions],
) -> Result<Vec<CovariateInfluence>> {
    let mut seen = HashSet::new();
    for lo in groups {
        if !seen.insert(lo.group.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate covariate group `{}`",
                lo.group
            )));
        }
    }
    groups.iter().map(|lo| calibrate(frame, lo)).collect()
}
