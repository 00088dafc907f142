//! Meta-analysis of diagnostic test accuracy with transformed bivariate
//! random-effects models.
//!
//! Per-study 2x2 tables are reduced to (sensitivity, false-positive-rate)
//! pairs, mapped onto a modelling scale by a one-parameter transform
//! family, and fitted with bivariate normal random-effects models. A grid
//! of candidate models (transform shapes crossed with two covariance
//! families) is then ranked by information criteria — marginal AIC with
//! and without the change-of-variables Jacobian, two conditional-AIC
//! realizations — and by empirical-likelihood statistics centred on the
//! fitted summary point or on the per-study predictions. The selected
//! model yields a summary ROC curve, its area, and confidence/prediction
//! regions; a seeded Monte-Carlo harness compares how well the criteria
//! pick curve-recovering models.
//!
//! # Modules
//!
//! * [`transforms`] — the shape-parameterized rate transform family.
//! * [`study_data`] — 2x2 tables, continuity correction, input parsing.
//! * [`model_fit`] — closed-form and numerical random-effects fits.
//! * [`criteria`] — information criteria, empirical likelihood, selection.
//! * [`sroc`] — summary ROC curves, AUC, confidence/prediction regions.
//! * [`dist`] — the sampling distributions used by the simulation harness.
//! * [`simulation`] — study generation, true ROC curves, the experiment
//!   driver.
//! * [`cli`] — the command-line front-end (`fit`, `select`, `sroc`,
//!   `simulate`).
//!
//! # Examples
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```text
//! cargo run --example fit_one_model
//! cargo run --example select_across_grid
//! cargo run --example summary_roc
//! cargo run --example empirical_likelihood
//! cargo run --example criterion_experiment
//! ```

pub mod cli;
pub mod criteria;
pub mod dist;
mod error;
pub mod mat2;
pub mod model_fit;
mod optim;
pub mod simulation;
pub mod sroc;
pub mod study_data;
pub mod transforms;

pub use error::{Error, Result};
