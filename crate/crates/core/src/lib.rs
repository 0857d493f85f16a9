//! Selection-aware probability calibration.
//!
//! When items are ranked by a noisy predictor and only the top-α fraction is
//! kept, the average prediction on the kept set overestimates the average
//! outcome even if every per-item prediction is unbiased. This crate
//! implements the variance-adjusting debiasing (VAD) meta-algorithm that
//! corrects the effect, the classic post-hoc calibrators it is compared
//! against, the selection-set calibration metrics, a numerical checker for
//! the underlying bias formula, and a seeded experiment harness.
//!
//! Modules map one-to-one onto the moving parts:
//!
//! * [`link`] — logistic / identity link functions and the clamped
//!   [`Probability`](link::Probability) type.
//! * [`rng`] — the single seeded randomness source and its child streams.
//! * [`dataset`] — synthetic Gaussian data, rejection-sampled covariate
//!   shift, splitting, CSV ingestion.
//! * [`linear_model`] — logistic regression by Newton/IRLS and bootstrap or
//!   reseed ensembles.
//! * [`calibrators`] — Platt scaling, histogram binning, isotonic
//!   regression, scaling-binning.
//! * [`vad`] — the λ estimator, the debiased transform, and the VAD+ ratio
//!   for composing with baseline calibrators.
//! * [`metrics`] — top-α selection and calibration error / ECE / MCE / log
//!   loss on the selection set.
//! * [`theory`] — quadrature of the maximization-bias integral, a
//!   Monte-Carlo selection-bias oracle, truncated-normal utilities, and the
//!   variance-decomposition check behind the λ estimator.
//! * [`harness`] — experiment configs, the replicated pipeline, and report
//!   emission.

pub mod calibrators;
pub mod dataset;
mod error;
pub mod harness;
pub mod linalg;
pub mod linear_model;
pub mod link;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod theory;
pub mod vad;

pub use error::{Error, Result};
pub use link::{LinkFunction, Probability};
pub use rng::SeedStream;
