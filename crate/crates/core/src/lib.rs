//! Forward-folding inference for binned counting experiments.
//!
//! This crate builds detector response matrices from simulated events,
//! propagates their statistical and systematic uncertainties as an ensemble
//! of toy matrices, and evaluates binned Poisson likelihoods of truth-level
//! hypotheses against reconstructed-level data.  On top of the likelihood
//! sit frequentist p-values (toy replicas), confidence scans, Bayesian
//! posterior sampling and a Mahalanobis compatibility test between
//! independently built matrices.
//!
//! The pieces fit together as a pipeline:
//!
//! 1. [`binning`] — rectangular multi-variable binnings and event records.
//! 2. [`response`] — response-matrix builders with conjugate
//!    (Beta/Dirichlet/normal) uncertainty treatment and toy sampling.
//! 3. [`likelihood`] — marginal/profile Poisson likelihoods over the toy
//!    ensemble, composite hypotheses and maximum-likelihood fits.
//! 4. [`pvalues`] — toy-replica p-values and confidence scans.
//! 5. [`bayes`] — posterior sampling and Bayes factors.
//! 6. [`compat`] — Mahalanobis compatibility between two matrix ensembles.
//! 7. [`mockexp`] — a small self-contained mock experiment for validation.
//! 8. [`io`] — file formats (events CSV, matrix sets, histograms, bundles).

pub mod bayes;
pub mod binning;
pub mod compat;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod mockexp;
pub mod optim;
pub mod pvalues;
pub mod response;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
