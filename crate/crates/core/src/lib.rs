//! Post-processing probability calibration for binary classifiers.
//!
//! The crate fits calibration maps from `(score, label)` pairs and measures how
//! well calibrated a set of predictions is:
//!
//! - [`binning`]: histogram binning, plus its Bayes-rule plug-in form.
//! - [`monotone`]: Platt scaling and isotonic regression (pool adjacent violators).
//! - [`density`]: plug-in calibrators built on kernel density estimates and on
//!   Dirichlet process mixtures fitted by truncated variational inference.
//! - [`metrics`]: reliability diagrams, ECE, MCE, RMSE, accuracy and tie-aware AUC.
//! - [`synth`]: synthetic data with known ground truth and a logistic base learner.
//! - [`harness`]: Monte-Carlo checks of the finite-sample guarantees of histogram binning.

pub mod binning;
pub mod data;
pub mod density;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod monotone;
pub mod quadrature;
pub mod seed;
pub mod synth;

pub use data::{Dataset, FeatureDataset, ScoredSample};
pub use error::{Error, Result};
pub use metrics::BinScheme;
