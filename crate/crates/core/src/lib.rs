//! Semi-Markov switching vector autoregressive (SMS-VAR) models for anomaly
//! detection in heterogeneous multivariate sequences: binary switch channels
//! encoded as modes plus continuous sensor channels.
//!
//! The crate covers the full pipeline:
//!
//! - [`flight`] and [`io`]: mode encoding, countdown durations, dataset and model files.
//! - [`model`]: the conditional distributions and ancestral sampling.
//! - [`inference`]: filtering, smoothing and Viterbi decoding of the hidden phase.
//! - [`learning`]: EM estimation, with the VAR M-step solved by [`linalg::tsqr_solve`].
//! - [`detection`] and [`streaming`]: KL-divergence and log-likelihood anomaly scores, batch or row by row.
//! - [`baselines`]: VAR residual, semi-Markov mode model and MKAD detectors.
//! - [`experiments`]: synthetic scenarios, ROC/AUC and the benchmark harness.
//! - [`cli`]: the `smsvar` command-line tool.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod detection;
pub mod error;
pub mod experiments;
pub mod flight;
pub mod inference;
pub mod io;
pub mod learning;
pub mod linalg;
pub mod model;
pub mod streaming;

pub use error::{Error, Result};
