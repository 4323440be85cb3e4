use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propensities are clipped into `[PROPENSITY_FLOOR, 1 - PROPENSITY_FLOOR]`.
pub const PROPENSITY_FLOOR: f64 = 1e-6;

/// Clip a propensity into the open unit interval. Returns the clipped value
/// and whether clipping changed it.
pub fn clip_propensity(g: f64) -> (f64, bool) {
    let hi = 1.0 - PROPENSITY_FLOOR;
    if g < PROPENSITY_FLOOR {
        (PROPENSITY_FLOOR, true)
    } else if g > hi {
        (hi, true)
    } else {
        (g, false)
    }
}

/// Target of the effect estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub enum Estimand {
    /// Average treatment effect over all units.
    #[default]
    #[serde(rename = "ATE")]
    Ate,
    /// Average treatment effect over treated units.
    #[serde(rename = "ATT")]
    Att,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::Ate => "ATE",
            Estimand::Att => "ATT",
        })
    }
}

impl FromStr for Estimand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ATE" => Ok(Estimand::Ate),
            "ATT" => Ok(Estimand::Att),
            _ => Err(Error::InvalidInput(format!(
                "estimand must be one of ATE, ATT; got `{s}`"
            ))),
        }
    }
}

impl<'de> Deserialize<'de> for Estimand {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-unit outcome, treatment, and model predictions.
///
/// Columns are validated on construction: equal lengths, at least two rows,
/// finite values, both treatment arms present. Propensities in `[0, 1]` are
/// clipped into the open interval and the number of clipped rows is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFrame {
    y: Vec<f64>,
    t: Vec<bool>,
    g: Vec<f64>,
    q0: Vec<f64>,
    q1: Vec<f64>,
    clipped: usize,
}

impl PredictionFrame {
    pub fn new(y: Vec<f64>, t: Vec<bool>, g: Vec<f64>, q0: Vec<f64>, q1: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if t.len() != n || g.len() != n || q0.len() != n || q1.len() != n {
            return Err(Error::InvalidInput(format!(
                "column lengths differ: y={}, t={}, g={}, q0={}, q1={}",
                n,
                t.len(),
                g.len(),
                q0.len(),
                q1.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "prediction frame needs at least 2 rows, got {n}"
            )));
        }
        for (name, col) in [("y", &y), ("g", &g), ("q0", &q0), ("q1", &q1)] {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value in column `{name}` at row {i}"
                )));
            }
        }
        if let Some(i) = g.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(format!(
                "propensity g={} at row {i} lies outside [0, 1]",
                g[i]
            )));
        }
        let treated = t.iter().filter(|&&v| v).count();
        if treated == 0 || treated == n {
            return Err(Error::Degenerate(
                "both treated and control units are required".into(),
            ));
        }
        let mut clipped = 0;
        let g = g
            .into_iter()
            .map(|v| {
                let (c, hit) = clip_propensity(v);
                clipped += usize::from(hit);
                c
            })
            .collect();
        Ok(Self {
            y,
            t,
            g,
            q0,
            q1,
            clipped,
        })
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

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn q0(&self) -> &[f64] {
        &self.q0
    }

    pub fn q1(&self) -> &[f64] {
        &self.q1
    }

    /// Rows whose propensity was moved by clipping.
    pub fn clipped_rows(&self) -> usize {
        self.clipped
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&v| v).count()
    }

    /// Outcome prediction at the observed treatment.
    pub fn q_observed(&self, i: usize) -> f64 {
        if self.t[i] {
            self.q1[i]
        } else {
            self.q0[i]
        }
    }

    pub fn residual(&self, i: usize) -> f64 {
        self.y[i] - self.q_observed(i)
    }

    /// Mean of squared residuals `y - Q(t, x)` at the observed arm.
    pub fn mean_sq_residual(&self) -> f64 {
        (0..self.len()).map(|i| self.residual(i).powi(2)).sum::<f64>() / self.len() as f64
    }

    /// A new frame built from the given rows (repeats allowed).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let pick = |col: &[f64]| rows.iter().map(|&i| col[i]).collect::<Vec<_>>();
        Self::new(
            pick(&self.y),
            rows.iter().map(|&i| self.t[i]).collect(),
            pick(&self.g),
            pick(&self.q0),
            pick(&self.q1),
        )
    }
}

/// Strictly increasing treatment-influence values inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AlphaGrid(Vec<f64>);

impl AlphaGrid {
    pub const DEFAULT_START: f64 = 0.005;
    pub const DEFAULT_STOP: f64 = 0.995;
    pub const DEFAULT_COUNT: usize = 199;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("alpha grid is empty".into()));
        }
        if let Some(a) = values.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidInput(format!(
                "alpha grid values must lie in (0, 1), got {a}"
            )));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "alpha grid must be strictly increasing".into(),
            ));
        }
        Ok(Self(values))
    }

    /// `count` evenly spaced values from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Self> {
        let values = match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => {
                let step = (stop - start) / (count - 1) as f64;
                (0..count).map(|i| start + step * i as f64).collect()
            }
        };
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self::linspace(Self::DEFAULT_START, Self::DEFAULT_STOP, Self::DEFAULT_COUNT)
            .expect("default grid is valid")
    }
}

impl<'de> Deserialize<'de> for AlphaGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        AlphaGrid::new(values).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(g: Vec<f64>) -> Result<PredictionFrame> {
        let n = g.len();
        PredictionFrame::new(
            vec![0.0; n],
            (0..n).map(|i| i % 2 == 0).collect(),
            g,
            vec![0.0; n],
            vec![1.0; n],
        )
    }

    #[test]
    fn clips_boundary_propensities() {
        let f = frame(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(f.clipped_rows(), 2);
        assert_eq!(f.g()[0], PROPENSITY_FLOOR);
        assert_eq!(f.g()[2], 1.0 - PROPENSITY_FLOOR);
    }

    #[test]
    fn rejects_out_of_range_propensity() {
        assert!(frame(vec![0.5, 1.2]).is_err());
        assert!(frame(vec![-0.1, 0.5]).is_err());
    }

    #[test]
    fn rejects_single_arm_and_short_frames() {
        let single = PredictionFrame::new(vec![0.0; 3], vec![true; 3], vec![0.5; 3], vec![0.0; 3], vec![0.0; 3]);
        assert!(matches!(single, Err(Error::Degenerate(_))));
        assert!(frame(vec![0.5]).is_err());
    }

    #[test]
    fn rejects_nan_and_ragged_columns() {
        let nan = PredictionFrame::new(vec![f64::NAN, 0.0], vec![true, false], vec![0.5; 2], vec![0.0; 2], vec![0.0; 2]);
        assert!(nan.is_err());
        let ragged = PredictionFrame::new(vec![0.0; 2], vec![true, false], vec![0.5; 3], vec![0.0; 2], vec![0.0; 2]);
        assert!(ragged.is_err());
    }

    #[test]
    fn estimand_parsing() {
        assert_eq!("ate".parse::<Estimand>().unwrap(), Estimand::Ate);
        assert_eq!("ATT".parse::<Estimand>().unwrap(), Estimand::Att);
        assert!("atc".parse::<Estimand>().is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = AlphaGrid::default();
        assert_eq!(g.len(), 199);
        assert_eq!(g.values()[0], 0.005);
        assert!((g.values()[198] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(AlphaGrid::new(vec![0.2, 0.1]).is_err());
        assert!(AlphaGrid::new(vec![0.0, 0.5]).is_err());
        assert!(AlphaGrid::new(vec![0.5, 1.0]).is_err());
        assert!(AlphaGrid::new(vec![]).is_err());
        assert!(AlphaGrid::new(vec![0.1, 0.1]).is_err());
    }
}
