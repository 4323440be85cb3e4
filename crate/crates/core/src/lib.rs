//! Austen plots: sensitivity analysis for unobserved confounding, computed
//! from per-unit predictions of any outcome and propensity models.
//!
//! The pieces, bottom up:
//!
//! * [`specfun`]: digamma and trigamma.
//! * [`frame`]: validated prediction tables, estimands, alpha grids.
//! * [`sensitivity`]: bias, partial R², their inverse, and the bias contour.
//! * [`calibration`]: influence of observed covariate groups.
//! * [`simulator`]: synthetic data drawn from the sensitivity model.
//! * [`models`]: reference logistic and ridge fits with cross-fitting.
//! * [`conservatism`]: sensitivity bias against the bias of dropping a group.
//! * [`bootstrap`]: prediction-level bootstrap bands.
//! * [`io`] and [`plot`]: file formats and SVG rendering.

pub mod bootstrap;
pub mod calibration;
pub mod conservatism;
pub mod error;
pub mod frame;
pub mod io;
pub mod models;
pub mod plot;
pub mod sensitivity;
pub mod simulator;
pub mod specfun;

pub use bootstrap::{bootstrap_band, Band, BootstrapConfig, DotInterval};
pub use calibration::{
    alpha_observed, calibrate, calibrate_groups, r2_observed, CovariateInfluence, LeaveOutPredictions,
};
pub use conservatism::{conservatism_experiment, ConservatismReport};
pub use error::{Error, Result};
pub use frame::{AlphaGrid, Estimand, PredictionFrame, PROPENSITY_FLOOR};
pub use models::{
    crossfit_predictions, leave_group_out_predictions, CrossFit, CrossFitter, Dataset, FitConfig, GroupSpec,
};
pub use plot::{build_plot_data, render_svg, AxisTransform, Labels, PlotData, Style};
pub use sensitivity::{
    bias, bias_contour, delta_from_r2, digamma_bracket, r2_par, tau_hat, trigamma_variance_term, BiasCurve,
    CurvePoint, OutcomeInfluence, SensitivityParams,
};
pub use simulator::{simulate, GroundTruth, SimConfig, SimSample};
pub use specfun::{digamma, trigamma};
