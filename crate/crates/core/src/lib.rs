//! Track-before-detect of weak nonlinear-FM signals with a bank of
//! cost-reference particle filters (CRPFs).
//!
//! The crate is organised bottom-up:
//!
//! - [`signalgen`]: the two NLFM test signals, heavy-tailed complex noise and
//!   ground-truth instantaneous frequency.
//! - [`model`]: the piecewise constant-chirp state model, prior classification,
//!   per-hypothesis chirp ranges and block partitioning.
//! - [`crpf`]: a single cost-reference particle filter over one block.
//! - [`crpfb`]: the filter bank and its minimum-cumulated-cost selection.
//! - [`detector`]: the batch test metric and threshold decision.
//! - [`gevfit`]: generalized extreme value modelling of the H0 metric.
//! - [`harness`]: Monte Carlo calibration, detection, ROC, RMSE and timing.
//! - [`cli`]: the `crpfb` command-line front end.

pub mod cli;
pub mod crpf;
pub mod crpfb;
pub mod detector;
pub mod error;
pub mod gevfit;
pub mod harness;
pub mod model;
pub mod numfmt;
pub mod optim;
pub mod rng;
pub mod signalgen;

pub use error::{Error, Result};
pub use num_complex::Complex64;
