//! Prediction-level bootstrap: rows of the prediction frame (and the aligned
//! leave-out rows) are resampled jointly; models are not refit.
//!
//! Replicate `r` draws from its own ChaCha stream `(seed, r)`, so results do
//! not depend on evaluation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{alpha_raw_weighted, calibrate_groups, r2_raw_weighted, LeaveOutPredictions};
use crate::error::{Error, Result};
use crate::frame::{AlphaGrid, Estimand, PredictionFrame};
use crate::sensitivity::{
    bracket_unchecked, check_target, concentration, contour_r2, curve_point, variance_unchecked,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    /// Redraw limit per replicate when a resample loses a treatment arm.
    pub max_redraws: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 100,
            level: 0.95,
            seed: 0,
            max_redraws: 100,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::InvalidInput("bootstrap needs at least 1 replicate".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Central percentile interval at `level`.
pub fn percentile_interval(values: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail))
}

/// Row multiplicities for one replicate. Redraws while a treatment arm is
/// missing; returns the counts and the number of redraws used.
pub fn resample_counts(t: &[bool], seed: u64, replicate: u64, max_redraws: usize) -> Result<(Vec<u32>, usize)> {
    let n = t.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    for redraw in 0..=max_redraws {
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        let treated: u32 = counts.iter().zip(t).filter(|(_, &ti)| ti).map(|(c, _)| *c).sum();
        if treated > 0 && (treated as usize) < n {
            return Ok((counts, redraw));
        }
    }
    Err(Error::Degenerate(format!(
        "bootstrap replicate {replicate} lost a treatment arm in {} draws",
        max_redraws + 1
    )))
}

/// Expand counts into row indices.
pub fn counts_to_rows(counts: &[u32]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotInterval {
    pub group: String,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub r2_lo: f64,
    pub r2_hi: f64,
}

/// Percentile intervals for the contour at each grid alpha and for each
/// calibration dot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub schema_version: u32,
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Resamples discarded because they lost a treatment arm.
    pub redraws: usize,
    pub alpha: Vec<f64>,
    pub r2_lo: Vec<f64>,
    pub r2_hi: Vec<f64>,
    pub dots: Vec<DotInterval>,
}

impl Band {
    pub fn width_at(&self, i: usize) -> f64 {
        self.r2_hi[i] - self.r2_lo[i]
    }

    pub fn median_width(&self) -> f64 {
        let mut w: Vec<f64> = (0..self.alpha.len()).map(|i| self.width_at(i)).collect();
        w.sort_by(f64::total_cmp);
        quantile_sorted(&w, 0.5)
    }
}

/// Count-weighted mean, taken around the first kept value like the
/// unweighted means in `sensitivity`.
fn weighted_mean(counts: &[u32], values: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    let mut first = None;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&c, &v)) in counts.iter().zip(values).enumerate() {
        if c > 0 && keep(i) {
            let base = *first.get_or_insert(v);
            let w = f64::from(c);
            num += w * (v - base);
            den += w;
        }
    }
    first.map_or(f64::NAN, |base| base + num / den)
}

/// Bootstrap band for the bias contour at a fixed target, plus intervals for
/// the calibration dots.
pub fn bootstrap_band(
    frame: &PredictionFrame,
    leave_outs: &[LeaveOutPredictions],
    target_bias: f64,
    estimand: Estimand,
    grid: &AlphaGrid,
    cfg: &BootstrapConfig,
) -> Result<Band> {
    cfg.validate()?;
    let target = check_target(target_bias)?;
    // validates alignment and duplicate names once, up front
    calibrate_groups(frame, leave_outs)?;

    let t = frame.t();
    let draws = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| resample_counts(t, cfg.seed, r, cfg.max_redraws))
        .collect::<Result<Vec<_>>>()?;
    let redraws = draws.iter().map(|(_, r)| r).sum();
    let counts: Vec<Vec<u32>> = draws.into_iter().map(|(c, _)| c).collect();

    let sq_resid: Vec<f64> = (0..frame.len()).map(|i| frame.residual(i).powi(2)).collect();
    let mse: Vec<f64> = counts.iter().map(|c| weighted_mean(c, &sq_resid, |_| true)).collect();
    if let Some(r) = mse.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::Degenerate(format!(
            "bootstrap replicate {r} has identically zero residuals"
        )));
    }
    let in_estimand = |i: usize| estimand == Estimand::Ate || t[i];

    let per_alpha: Vec<(f64, f64)> = grid
        .values()
        .par_iter()
        .map(|&alpha| {
            let m = concentration(alpha);
            let bracket: Vec<f64> = frame.g().iter().map(|&g| bracket_unchecked(g, m)).collect();
            let variance: Vec<f64> = frame
                .g()
                .iter()
                .zip(t)
                .map(|(&g, &ti)| variance_unchecked(g, ti, m))
                .collect();
            let values: Vec<f64> = counts
                .iter()
                .zip(&mse)
                .map(|(c, &mse)| {
                    let mb = weighted_mean(c, &bracket, in_estimand);
                    let mv = weighted_mean(c, &variance, |_| true);
                    curve_point(alpha, contour_r2(target, mb, mv, mse)).r2
                })
                .collect();
            percentile_interval(&values, cfg.level)
        })
        .collect();

    let mut dots = Vec::with_capacity(leave_outs.len());
    for lo in leave_outs {
        let mut alphas = Vec::with_capacity(counts.len());
        let mut r2s = Vec::with_capacity(counts.len());
        for c in &counts {
            let w: Vec<f64> = c.iter().map(|&v| f64::from(v)).collect();
            alphas.push(alpha_raw_weighted(frame, lo, Some(&w))?.max(0.0));
            r2s.push(r2_raw_weighted(frame, lo, Some(&w))?.max(0.0));
        }
        let (alpha_lo, alpha_hi) = percentile_interval(&alphas, cfg.level);
        let (r2_lo, r2_hi) = percentile_interval(&r2s, cfg.level);
        dots.push(DotInterval {
            group: lo.group().to_string(),
            alpha_lo,
            alpha_hi,
            r2_lo,
            r2_hi,
        });
    }

    Ok(Band {
        schema_version: crate::io::SCHEMA_VERSION,
        level: cfg.level,
        replicates: cfg.replicates,
        seed: cfg.seed,
        redraws,
        alpha: grid.values().to_vec(),
        r2_lo: per_alpha.iter().map(|p| p.0).collect(),
        r2_hi: per_alpha.iter().map(|p| p.1).collect(),
        dots,
    })
}
