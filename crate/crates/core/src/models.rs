//! Reference nuisance models: logistic regression for the propensity and
//! ridge regression for the outcome, cross-fit over k folds.
//!
//! These exist so the tool runs end to end. Any model that produces
//! out-of-fold predictions can stand in for them.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::LeaveOutPredictions;
use crate::error::{Error, Result};
use crate::frame::PredictionFrame;

/// Observed data: outcome, treatment and named covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<bool>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, t: Vec<bool>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if t.len() != n {
            return Err(Error::InvalidInput("y and t differ in length".into()));
        }
        if names.len() != columns.len() {
            return Err(Error::InvalidInput(
                "covariate names and columns differ in count".into(),
            ));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name == "y" || name == "t" || !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate or reserved covariate name `{name}`"
                )));
            }
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::InvalidInput(format!(
                    "covariate `{name}` has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value in covariate `{name}` at row {i}"
                )));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite outcome at row {i}")));
        }
        Ok(Self { y, t, names, columns })
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

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Named groups of covariates whose joint influence is measured together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    #[serde(default = "crate::io::schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub allow_overlap: bool,
    pub groups: IndexMap<String, Vec<String>>,
}

impl Default for GroupSpec {
    fn default() -> Self {
        Self::new(IndexMap::new())
    }
}

impl GroupSpec {
    pub fn new(groups: IndexMap<String, Vec<String>>) -> Self {
        Self {
            schema_version: crate::io::SCHEMA_VERSION,
            allow_overlap: false,
            groups,
        }
    }

    /// Check every referenced column exists and, unless allowed, that no
    /// column sits in two groups.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for (group, cols) in &self.groups {
            if cols.is_empty() {
                return Err(Error::InvalidInput(format!("group `{group}` lists no columns")));
            }
            for col in cols {
                if data.column_index(col).is_none() {
                    return Err(Error::InvalidInput(format!(
                        "group `{group}` references unknown column `{col}`"
                    )));
                }
                if let Some(prev) = owner.insert(col, group) {
                    if !self.allow_overlap && prev != group {
                        return Err(Error::InvalidInput(format!(
                            "column `{col}` appears in groups `{prev}` and `{group}`"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Settings for the reference models and the fold split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub schema_version: u32,
    pub k: usize,
    /// Ridge penalty for the outcome model (standardized features).
    pub ridge: f64,
    /// Ridge penalty for the logistic propensity model.
    pub logistic_ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Include treatment-by-covariate terms in the outcome model.
    pub interactions: bool,
    pub max_fold_retries: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            schema_version: crate::io::SCHEMA_VERSION,
            k: 5,
            ridge: 1e-3,
            logistic_ridge: 0.0,
            max_iter: 100,
            tol: 1e-8,
            seed: 0,
            interactions: true,
            max_fold_retries: 50,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput(format!("fold count k must be >= 2, got {}", self.k)));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.ridge >= 0.0) || !(self.logistic_ridge >= 0.0) {
            return Err(Error::InvalidInput("ridge penalties must be nonnegative".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Fold label for every row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    k: usize,
    assignment: Vec<usize>,
}

impl Folds {
    /// Shuffle rows into `k` folds, reshuffling until every training split
    /// (all folds but one) holds both treatment arms.
    pub fn split(t: &[bool], k: usize, seed: u64, max_retries: usize) -> Result<Self> {
        let n = t.len();
        if n < k {
            return Err(Error::Degenerate(format!("{n} rows cannot fill {k} folds")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..=max_retries {
            order.shuffle(&mut rng);
            let mut assignment = vec![0; n];
            for (pos, &row) in order.iter().enumerate() {
                assignment[row] = pos % k;
            }
            let folds = Self { k, assignment };
            if (0..k).all(|f| folds.training_has_both_arms(t, f)) {
                return Ok(folds);
            }
        }
        Err(Error::Degenerate(format!(
            "could not find a {k}-fold split with both treatment arms in every training set after {max_retries} retries"
        )))
    }

    fn training_has_both_arms(&self, t: &[bool], fold: usize) -> bool {
        let mut arms = [false; 2];
        for (i, &f) in self.assignment.iter().enumerate() {
            if f != fold {
                arms[usize::from(t[i])] = true;
            }
        }
        arms[0] && arms[1]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn rows_in(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn rows_outside(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Mean/scale of each feature over a training split. Constant columns are
/// dropped.
struct Standardizer {
    cols: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(data: &Dataset, cols: &[usize], rows: &[usize]) -> Self {
        let m = rows.len() as f64;
        let mut kept = Standardizer {
            cols: Vec::new(),
            mean: Vec::new(),
            scale: Vec::new(),
        };
        for &c in cols {
            let col = &data.columns[c];
            let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / m;
            let var = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / m;
            if var > 1e-24 * (1.0 + mean * mean) {
                kept.cols.push(c);
                kept.mean.push(mean);
                kept.scale.push(var.sqrt());
            }
        }
        kept
    }

    fn width(&self) -> usize {
        self.cols.len()
    }

    fn row(&self, data: &Dataset, i: usize, out: &mut Vec<f64>) {
        out.clear();
        for ((&c, &mu), &s) in self.cols.iter().zip(&self.mean).zip(&self.scale) {
            out.push((data.columns[c][i] - mu) / s);
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn solve_spd(h: DMatrix<f64>, rhs: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    h.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Fit(format!("{what}: normal equations are singular")))
}

/// Logistic regression by iteratively reweighted least squares. The first
/// coefficient is an unpenalized intercept.
pub fn fit_logistic(x: &DMatrix<f64>, t: &[bool], ridge: f64, max_iter: usize, tol: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let target = DVector::from_iterator(n, t.iter().map(|&v| if v { 1.0 } else { 0.0 }));
    let mut beta = DVector::zeros(p);
    let penalized_loglik = |beta: &DVector<f64>| {
        let eta = x * beta;
        let ll: f64 = eta
            .iter()
            .zip(target.iter())
            .map(|(&e, &y)| y * e - (if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() }))
            .sum();
        ll - 0.5 * ridge * beta.rows(1, p - 1).norm_squared()
    };
    let mut ll = penalized_loglik(&beta);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let mut grad = x.transpose() * (&target - &mu);
        let mut weighted = x.clone();
        for (mut row, wi) in weighted.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        let mut hess = x.transpose() * weighted;
        for j in 1..p {
            grad[j] -= ridge * beta[j];
            hess[(j, j)] += ridge;
        }
        let step = solve_spd(hess, grad, "logistic regression")?;
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut next_ll = penalized_loglik(&next);
        while next_ll < ll - 1e-12 * ll.abs() && scale > 1e-6 {
            scale *= 0.5;
            next = &beta + &step * scale;
            next_ll = penalized_loglik(&next);
        }
        let change = (&step * scale).amax();
        beta = next;
        ll = next_ll;
        if change < tol * (1.0 + beta.amax()) {
            return Ok(beta);
        }
    }
    Err(Error::Fit(format!(
        "logistic regression did not converge after {max_iter} iterations"
    )))
}

/// Ridge regression with an unpenalized intercept in the first column.
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<DVector<f64>> {
    let p = x.ncols();
    let mut gram = x.transpose() * x;
    for j in 1..p {
        gram[(j, j)] += ridge;
    }
    let rhs = x.transpose() * DVector::from_column_slice(y);
    solve_spd(gram, rhs, "ridge regression")
}

/// Out-of-fold nuisance predictions for every row.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisancePredictions {
    pub g: Vec<f64>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
}

impl NuisancePredictions {
    fn into_frame(self, data: &Dataset) -> Result<PredictionFrame> {
        PredictionFrame::new(data.y.clone(), data.t.clone(), self.g, self.q0, self.q1)
    }

    fn leave_out(&self, group: &str, data: &Dataset) -> Result<LeaveOutPredictions> {
        let q_wo = (0..data.len())
            .map(|i| if data.t[i] { self.q1[i] } else { self.q0[i] })
            .collect();
        LeaveOutPredictions::new(group, data.y.clone(), data.t.clone(), self.g.clone(), q_wo)
    }
}

/// Cross-fitting driver. Holds one fold split so every fit made through it
/// (full model and all leave-group-out refits) shares the same folds.
#[derive(Debug, Clone)]
pub struct CrossFitter<'a> {
    data: &'a Dataset,
    cfg: FitConfig,
    folds: Folds,
}

impl<'a> CrossFitter<'a> {
    pub fn new(data: &'a Dataset, cfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        let folds = Folds::split(&data.t, cfg.k, cfg.seed, cfg.max_fold_retries)?;
        Ok(Self {
            data,
            cfg: cfg.clone(),
            folds,
        })
    }

    pub fn folds(&self) -> &Folds {
        &self.folds
    }

    /// Out-of-fold predictions using the given covariate columns.
    pub fn predict(&self, cols: &[usize]) -> Result<NuisancePredictions> {
        let n = self.data.len();
        let per_fold = (0..self.folds.k)
            .into_par_iter()
            .map(|f| self.fit_fold(cols, f))
            .collect::<Result<Vec<_>>>()?;
        let mut out = NuisancePredictions {
            g: vec![0.0; n],
            q0: vec![0.0; n],
            q1: vec![0.0; n],
        };
        for (rows, preds) in per_fold {
            for (k, i) in rows.into_iter().enumerate() {
                out.g[i] = preds.g[k];
                out.q0[i] = preds.q0[k];
                out.q1[i] = preds.q1[k];
            }
        }
        Ok(out)
    }

    fn fit_fold(&self, cols: &[usize], fold: usize) -> Result<(Vec<usize>, NuisancePredictions)> {
        let data = self.data;
        let train = self.folds.rows_outside(fold);
        let test = self.folds.rows_in(fold);
        let std = Standardizer::fit(data, cols, &train);
        let p = std.width();
        let mut buf = Vec::with_capacity(p);

        let mut xg = DMatrix::zeros(train.len(), p + 1);
        for (r, &i) in train.iter().enumerate() {
            std.row(data, i, &mut buf);
            xg[(r, 0)] = 1.0;
            for (j, v) in buf.iter().enumerate() {
                xg[(r, j + 1)] = *v;
            }
        }
        let t_train: Vec<bool> = train.iter().map(|&i| data.t[i]).collect();
        let beta_g = fit_logistic(&xg, &t_train, self.cfg.logistic_ridge, self.cfg.max_iter, self.cfg.tol)
            .map_err(|e| Error::Fit(format!("fold {fold}: {e}")))?;

        let outcome_width = 2 + p + if self.cfg.interactions { p } else { 0 };
        let outcome_row = |x: &[f64], treated: bool, out: &mut [f64]| {
            let tv = if treated { 1.0 } else { 0.0 };
            out[0] = 1.0;
            out[1] = tv;
            for (j, v) in x.iter().enumerate() {
                out[2 + j] = *v;
                if self.cfg.interactions {
                    out[2 + p + j] = tv * v;
                }
            }
        };
        let mut xq = DMatrix::zeros(train.len(), outcome_width);
        let mut row = vec![0.0; outcome_width];
        for (r, &i) in train.iter().enumerate() {
            std.row(data, i, &mut buf);
            outcome_row(&buf, data.t[i], &mut row);
            for (j, v) in row.iter().enumerate() {
                xq[(r, j)] = *v;
            }
        }
        let y_train: Vec<f64> = train.iter().map(|&i| data.y[i]).collect();
        let beta_q = fit_ridge(&xq, &y_train, self.cfg.ridge)
            .map_err(|e| Error::Fit(format!("fold {fold}: {e}")))?;

        let mut preds = NuisancePredictions {
            g: Vec::with_capacity(test.len()),
            q0: Vec::with_capacity(test.len()),
            q1: Vec::with_capacity(test.len()),
        };
        for &i in &test {
            std.row(data, i, &mut buf);
            let eta = beta_g[0] + buf.iter().zip(beta_g.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>();
            preds.g.push(sigmoid(eta));
            for treated in [false, true] {
                outcome_row(&buf, treated, &mut row);
                let q: f64 = row.iter().zip(beta_q.iter()).map(|(a, b)| a * b).sum();
                if treated {
                    preds.q1.push(q);
                } else {
                    preds.q0.push(q);
                }
            }
        }
        Ok((test, preds))
    }

    fn all_columns(&self) -> Vec<usize> {
        (0..self.data.names.len()).collect()
    }

    fn columns_without(&self, names: &[String]) -> Result<Vec<usize>> {
        let mut drop = HashSet::new();
        for name in names {
            let idx = self
                .data
                .column_index(name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown column `{name}`")))?;
            drop.insert(idx);
        }
        Ok(self.all_columns().into_iter().filter(|c| !drop.contains(c)).collect())
    }

    /// Full-model prediction frame.
    pub fn full_frame(&self) -> Result<PredictionFrame> {
        self.predict(&self.all_columns())?.into_frame(self.data)
    }

    /// Prediction frame from models that never see the named columns.
    pub fn frame_without(&self, names: &[String]) -> Result<PredictionFrame> {
        self.predict(&self.columns_without(names)?)?.into_frame(self.data)
    }

    /// Leave-group-out predictions for each group, in the order the groups are listed.
    pub fn leave_group_out(&self, groups: &GroupSpec) -> Result<Vec<LeaveOutPredictions>> {
        groups.validate(self.data)?;
        groups
            .groups
            .iter()
            .map(|(name, cols)| {
                let preds = self.predict(&self.columns_without(cols)?)?;
                preds.leave_out(name, self.data)
            })
            .collect()
    }
}

/// Full-model out-of-fold predictions plus the folds used.
#[derive(Debug, Clone)]
pub struct CrossFit {
    pub frame: PredictionFrame,
    pub folds: Folds,
}

pub fn crossfit_predictions(data: &Dataset, cfg: &FitConfig) -> Result<CrossFit> {
    let fitter = CrossFitter::new(data, cfg)?;
    Ok(CrossFit {
        frame: fitter.full_frame()?,
        folds: fitter.folds.clone(),
    })
}

/// Leave-group-out refits on the same folds `crossfit_predictions` uses for
/// this configuration.
pub fn leave_group_out_predictions(
    data: &Dataset,
    cfg: &FitConfig,
    groups: &GroupSpec,
) -> Result<Vec<LeaveOutPredictions>> {
    if groups.groups.is_empty() {
        return Ok(Vec::new());
    }
    CrossFitter::new(data, cfg)?.leave_group_out(groups)
}

/// Groups whose removal leaves no covariates; their models are
/// intercept-only.
pub fn intercept_only_groups(data: &Dataset, groups: &GroupSpec) -> Vec<String> {
    groups
        .groups
        .iter()
        .filter(|(_, cols)| data.names.iter().all(|n| cols.contains(n)))
        .map(|(name, _)| name.clone())
        .collect()
}
