//! Synthetic data drawn exactly from the Beta–Bernoulli sensitivity model,
//! with the latent complete propensity kept for checking.
//!
//! Per unit: covariates `x`, observed propensity `g(x)`, latent
//! `g̃ ~ Beta(g M, (1 - g) M)` with `M = 1/alpha - 1`, treatment
//! `t ~ Bernoulli(g̃)`, and outcome
//! `y = Q(t, x) + delta (logit g̃ - E[logit g̃ | x, t]) + noise`.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{clip_propensity, PredictionFrame};
use crate::models::Dataset;
use crate::sensitivity::{bracket_unchecked, check_alpha, concentration, variance_unchecked};
use crate::specfun::digamma_unchecked;

/// How one covariate column is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateDist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    /// Square of an earlier column.
    Square { of: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    pub dist: CovariateDist,
}

/// Baseline propensity `g(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PropensitySpec {
    Constant {
        value: f64,
    },
    /// `sigmoid(intercept + Σ linear·x + Σ quadratic·x²)`.
    Logistic {
        intercept: f64,
        #[serde(default)]
        linear: IndexMap<String, f64>,
        #[serde(default)]
        quadratic: IndexMap<String, f64>,
    },
}

/// Baseline outcome `Q(t, x) = intercept + effect·t + Σ linear·x + t Σ interaction·x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub intercept: f64,
    pub treatment_effect: f64,
    #[serde(default)]
    pub linear: IndexMap<String, f64>,
    #[serde(default)]
    pub interaction: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "crate::io::schema_version")]
    pub schema_version: u32,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub noise_sd: f64,
    pub seed: u64,
    pub covariates: Vec<CovariateSpec>,
    pub propensity: PropensitySpec,
    pub outcome: OutcomeSpec,
    /// When set, `logit g̃` is exported as an observed covariate with this
    /// name, turning the latent confounder into a measured one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_column: Option<String>,
}

fn uniform(name: &str) -> CovariateSpec {
    CovariateSpec {
        name: name.into(),
        dist: CovariateDist::Uniform { low: 0.0, high: 1.0 },
    }
}

fn coefs(pairs: &[(&str, f64)]) -> IndexMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl SimConfig {
    /// Two uniform covariates driving propensity and outcome upward plus one
    /// influence-free uniform column `x3`.
    pub fn standard(n: usize, alpha: f64, delta: f64, seed: u64) -> Self {
        Self {
            schema_version: crate::io::SCHEMA_VERSION,
            n,
            alpha,
            delta,
            noise_sd: 1.0,
            seed,
            covariates: vec![uniform("x1"), uniform("x2"), uniform("x3")],
            propensity: PropensitySpec::Logistic {
                intercept: -1.5,
                linear: coefs(&[("x1", 3.0), ("x2", 1.0)]),
                quadratic: IndexMap::new(),
            },
            outcome: OutcomeSpec {
                intercept: 1.0,
                treatment_effect: 2.0,
                linear: coefs(&[("x1", 3.0), ("x2", 1.5)]),
                interaction: IndexMap::new(),
            },
            latent_column: None,
        }
    }

    /// A measured confounder `z` (with its square `z_sq`) whose effect on
    /// treatment is U-shaped and whose effect on the outcome is linear, so
    /// treated and control units have the same mean `z` and omitting it
    /// biases the effect estimate very little.
    pub fn cancellation(n: usize, seed: u64) -> Self {
        Self {
            schema_version: crate::io::SCHEMA_VERSION,
            n,
            alpha: 0.01,
            delta: 0.0,
            noise_sd: 1.0,
            seed,
            covariates: vec![
                uniform("x1"),
                uniform("z"),
                CovariateSpec {
                    name: "z_sq".into(),
                    dist: CovariateDist::Square { of: "z".into() },
                },
            ],
            propensity: PropensitySpec::Logistic {
                intercept: 1.0,
                linear: coefs(&[("x1", 0.5), ("z", -8.0)]),
                quadratic: coefs(&[("z", 8.0)]),
            },
            outcome: OutcomeSpec {
                intercept: 1.0,
                treatment_effect: 2.0,
                linear: coefs(&[("x1", 1.0), ("z", 4.0)]),
                interaction: IndexMap::new(),
            },
            latent_column: None,
        }
    }

    /// Constant baseline propensity, with the model's own latent confounder
    /// exported as covariate `z = logit g̃`. Omitting `z` reproduces the
    /// sensitivity model exactly.
    pub fn monotone(n: usize, alpha: f64, delta: f64, seed: u64) -> Self {
        Self {
            schema_version: crate::io::SCHEMA_VERSION,
            n,
            alpha,
            delta,
            noise_sd: 1.0,
            seed,
            covariates: vec![uniform("x1")],
            propensity: PropensitySpec::Constant { value: 0.4 },
            outcome: OutcomeSpec {
                intercept: 1.0,
                treatment_effect: 2.0,
                linear: coefs(&[("x1", 1.0)]),
                interaction: IndexMap::new(),
            },
            latent_column: Some("z".into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        check_alpha(self.alpha).map_err(|e| Error::InvalidInput(e.to_string()))?;
        if !self.delta.is_finite() {
            return bad(format!("delta must be finite, got {}", self.delta));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        let mut names: Vec<&str> = Vec::new();
        for c in &self.covariates {
            if c.name == "y" || c.name == "t" || names.contains(&c.name.as_str()) {
                return bad(format!("duplicate or reserved covariate name `{}`", c.name));
            }
            match &c.dist {
                CovariateDist::Uniform { low, high } if !(low < high) => {
                    return bad(format!("covariate `{}`: need low < high", c.name));
                }
                CovariateDist::Normal { sd, .. } if !(*sd >= 0.0) => {
                    return bad(format!("covariate `{}`: sd must be >= 0", c.name));
                }
                CovariateDist::Square { of } if !names.contains(&of.as_str()) => {
                    return bad(format!(
                        "covariate `{}` squares `{of}`, which is not defined earlier",
                        c.name
                    ));
                }
                _ => {}
            }
            names.push(&c.name);
        }
        if let Some(latent) = &self.latent_column {
            if names.contains(&latent.as_str()) || latent == "y" || latent == "t" {
                return bad(format!("latent column `{latent}` clashes with a covariate"));
            }
        }
        let check_refs = |what: &str, map: &IndexMap<String, f64>| -> Result<()> {
            for (k, v) in map {
                if !names.contains(&k.as_str()) {
                    return Err(Error::InvalidInput(format!("{what} references unknown covariate `{k}`")));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("{what} coefficient for `{k}` is not finite")));
                }
            }
            Ok(())
        };
        match &self.propensity {
            PropensitySpec::Constant { value } => {
                if !(*value > 0.0 && *value < 1.0) {
                    return bad(format!("constant propensity must lie in (0, 1), got {value}"));
                }
            }
            PropensitySpec::Logistic {
                intercept,
                linear,
                quadratic,
            } => {
                if !intercept.is_finite() {
                    return bad("propensity intercept must be finite".into());
                }
                check_refs("propensity", linear)?;
                check_refs("propensity", quadratic)?;
            }
        }
        check_refs("outcome", &self.outcome.linear)?;
        check_refs("outcome", &self.outcome.interaction)?;
        if !self.outcome.intercept.is_finite() || !self.outcome.treatment_effect.is_finite() {
            return bad("outcome intercept and treatment effect must be finite".into());
        }
        Ok(())
    }
}

/// Population-level quantities known exactly for a simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub noise_sd: f64,
    pub seed: u64,
    /// Mean of `Q(1, x) - Q(0, x)`: what an unconfounded analysis targets.
    pub tau: f64,
    pub ate: f64,
    pub att: f64,
    /// `tau - ate` from the closed-form bias.
    pub bias_ate: f64,
    pub bias_att: f64,
    /// Partial R² of the latent confounder with the expected residual
    /// variance `delta² var(logit g̃ | x, t) + noise_sd²` in the denominator.
    pub r2_par: f64,
}

/// One simulated dataset with its latent quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSample {
    pub names: Vec<String>,
    /// Column-major covariates, excluding any exported latent column.
    pub x: Vec<Vec<f64>>,
    pub g_true: Vec<f64>,
    pub gtilde: Vec<f64>,
    /// `logit g̃`, kept exactly: `gtilde` rounds to 0 or 1 for extreme draws.
    pub logit_gtilde: Vec<f64>,
    pub t: Vec<bool>,
    pub y: Vec<f64>,
    /// `Q(0, x)` and `Q(1, x)`; equal to `E[Y | T, X]` by construction.
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    /// The confounder's outcome contribution `delta (logit g̃ - E[logit g̃ | x, t])`.
    pub confounding: Vec<f64>,
    pub noise: Vec<f64>,
    pub latent_column: Option<String>,
    pub truth: GroundTruth,
}

/// Natural log of a `Gamma(shape, 1)` draw, accurate for tiny shapes where
/// the draw itself underflows.
fn log_gamma_draw<R: Rng>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::InvalidInput(format!(
            "Beta shape parameter must be positive, got {shape}"
        )));
    }
    let boosted = if shape < 1.0 { shape + 1.0 } else { shape };
    let gamma = Gamma::new(boosted, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut log_g = gamma.sample(rng).ln();
    if shape < 1.0 {
        // G(a) = G(a + 1) U^(1/a)
        let u: f64 = rng.random::<f64>();
        log_g += (1.0 - u).ln() / shape;
    }
    Ok(log_g)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn baseline_propensity(spec: &PropensitySpec, names: &[String], row: &[f64]) -> f64 {
    let col = |k: &str| row[names.iter().position(|n| n == k).expect("validated")];
    match spec {
        PropensitySpec::Constant { value } => *value,
        PropensitySpec::Logistic {
            intercept,
            linear,
            quadratic,
        } => {
            let eta = intercept
                + linear.iter().map(|(k, b)| b * col(k)).sum::<f64>()
                + quadratic.iter().map(|(k, b)| b * col(k).powi(2)).sum::<f64>();
            logistic(eta)
        }
    }
}

fn baseline_outcome(spec: &OutcomeSpec, names: &[String], row: &[f64], treated: bool) -> f64 {
    let col = |k: &str| row[names.iter().position(|n| n == k).expect("validated")];
    let tv = if treated { 1.0 } else { 0.0 };
    spec.intercept
        + spec.treatment_effect * tv
        + spec.linear.iter().map(|(k, b)| b * col(k)).sum::<f64>()
        + tv * spec.interaction.iter().map(|(k, b)| b * col(k)).sum::<f64>()
}

/// `E[logit g̃ | x, t]` under the model.
fn latent_center(g: f64, m: f64, treated: bool) -> f64 {
    let s = if treated { 1.0 } else { 0.0 };
    digamma_unchecked(g * m + s) - digamma_unchecked((1.0 - g) * m + 1.0 - s)
}

/// Draw a sample. Deterministic given the configuration's seed.
pub fn simulate(cfg: &SimConfig) -> Result<SimSample> {
    cfg.validate()?;
    let n = cfg.n;
    let m = concentration(cfg.alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<String> = cfg.covariates.iter().map(|c| c.name.clone()).collect();
    let p = names.len();

    let mut x = vec![Vec::with_capacity(n); p];
    let mut sample = SimSample {
        names: names.clone(),
        x: Vec::new(),
        g_true: Vec::with_capacity(n),
        gtilde: Vec::with_capacity(n),
        logit_gtilde: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        q0: Vec::with_capacity(n),
        q1: Vec::with_capacity(n),
        confounding: Vec::with_capacity(n),
        noise: Vec::with_capacity(n),
        latent_column: cfg.latent_column.clone(),
        truth: GroundTruth {
            schema_version: crate::io::SCHEMA_VERSION,
            n,
            alpha: cfg.alpha,
            delta: cfg.delta,
            noise_sd: cfg.noise_sd,
            seed: cfg.seed,
            tau: 0.0,
            ate: 0.0,
            att: 0.0,
            bias_ate: 0.0,
            bias_att: 0.0,
            r2_par: 0.0,
        },
    };

    let mut row = vec![0.0; p];
    for _ in 0..n {
        for (j, spec) in cfg.covariates.iter().enumerate() {
            row[j] = match &spec.dist {
                CovariateDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
                CovariateDist::Normal { mean, sd } => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + sd * z
                }
                CovariateDist::Square { of } => {
                    let k = names.iter().position(|n| n == of).expect("validated");
                    row[k] * row[k]
                }
            };
            x[j].push(row[j]);
        }
        let (g, _) = clip_propensity(baseline_propensity(&cfg.propensity, &names, &row));
        let logit = log_gamma_draw(g * m, &mut rng)? - log_gamma_draw((1.0 - g) * m, &mut rng)?;
        let gtilde = logistic(logit).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        let treated = rng.random::<f64>() < gtilde;
        let noise = if cfg.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            cfg.noise_sd * z
        } else {
            0.0
        };
        let q0 = baseline_outcome(&cfg.outcome, &names, &row, false);
        let q1 = baseline_outcome(&cfg.outcome, &names, &row, true);
        let confounding = cfg.delta * (logit - latent_center(g, m, treated));
        let q_obs = if treated { q1 } else { q0 };

        sample.g_true.push(g);
        sample.gtilde.push(gtilde);
        sample.logit_gtilde.push(logit);
        sample.t.push(treated);
        sample.y.push(q_obs + confounding + noise);
        sample.q0.push(q0);
        sample.q1.push(q1);
        sample.confounding.push(confounding);
        sample.noise.push(noise);
    }
    sample.x = x;

    let truth = &mut sample.truth;
    let mut sum_tau = 0.0;
    let mut sum_bias = 0.0;
    let mut sum_tau_t = 0.0;
    let mut sum_bias_t = 0.0;
    let mut sum_var = 0.0;
    let mut treated = 0usize;
    for i in 0..n {
        let effect = sample.q1[i] - sample.q0[i];
        let bias = cfg.delta * bracket_unchecked(sample.g_true[i], m);
        sum_tau += effect;
        sum_bias += bias;
        if sample.t[i] {
            treated += 1;
            sum_tau_t += effect;
            sum_bias_t += bias;
        }
        sum_var += variance_unchecked(sample.g_true[i], sample.t[i], m);
    }
    let nf = n as f64;
    truth.tau = sum_tau / nf;
    truth.bias_ate = sum_bias / nf;
    truth.ate = truth.tau - truth.bias_ate;
    if treated > 0 {
        truth.bias_att = sum_bias_t / treated as f64;
        truth.att = sum_tau_t / treated as f64 - truth.bias_att;
    } else {
        truth.bias_att = f64::NAN;
        truth.att = f64::NAN;
    }
    let explained = cfg.delta * cfg.delta * sum_var / nf;
    let total = explained + cfg.noise_sd * cfg.noise_sd;
    truth.r2_par = if total > 0.0 { explained / total } else { 0.0 };
    Ok(sample)
}

impl SimSample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Prediction frame with the true propensity and the exact conditional
    /// expectations `Q(t, x)`.
    pub fn oracle_frame(&self) -> Result<PredictionFrame> {
        PredictionFrame::new(
            self.y.clone(),
            self.t.clone(),
            self.g_true.clone(),
            self.q0.clone(),
            self.q1.clone(),
        )
    }

    /// Observed data, with the latent confounder appended as a covariate
    /// when the configuration exports it.
    pub fn dataset(&self) -> Result<Dataset> {
        let mut names = self.names.clone();
        let mut cols = self.x.clone();
        if let Some(latent) = &self.latent_column {
            names.push(latent.clone());
            cols.push(self.logit_gtilde.clone());
        }
        Dataset::new(self.y.clone(), self.t.clone(), names, cols)
    }
}

fn check_both_arms(sample: &SimSample) -> Result<()> {
    let treated = sample.t.iter().filter(|&&v| v).count();
    if treated == 0 || treated == sample.len() {
        return Err(Error::Degenerate(
            "sample has a single treatment arm".into(),
        ));
    }
    Ok(())
}

/// Gap in expected complete propensity between treated and control units
/// with the same covariates.
///
/// Within-covariate arm means are combined by inverse-propensity weighting
/// (normalized weights), so the estimate targets the conditional gap even
/// when `g` varies; with constant `g` it is the plain difference of arm
/// means of `g̃`.
pub fn empirical_alpha(sample: &SimSample) -> Result<f64> {
    check_both_arms(sample)?;
    let (mut num1, mut den1, mut num0, mut den0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..sample.len() {
        let g = sample.g_true[i];
        if sample.t[i] {
            num1 += sample.gtilde[i] / g;
            den1 += 1.0 / g;
        } else {
            num0 += sample.gtilde[i] / (1.0 - g);
            den0 += 1.0 / (1.0 - g);
        }
    }
    Ok(num1 / den1 - num0 / den0)
}

/// `1 - mean[g̃(1 - g̃)] / mean[g(1 - g)]`.
pub fn empirical_alpha_variance_form(sample: &SimSample) -> Result<f64> {
    let n = sample.len() as f64;
    let den = sample.g_true.iter().map(|g| g * (1.0 - g)).sum::<f64>() / n;
    if !(den > 0.0) {
        return Err(Error::Degenerate("baseline propensities have no variance".into()));
    }
    let num = sample.gtilde.iter().map(|g| g * (1.0 - g)).sum::<f64>() / n;
    Ok(1.0 - num / den)
}
