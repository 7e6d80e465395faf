//! Synthetic data with known ground truth and a substitute base learner.

mod logistic;
mod oracle;
mod xor;

pub use logistic::{fit_logistic, FeatureMap, LogisticConfig, LogisticModel};
pub use oracle::{generate_oracle, OracleSpec, TruthCurve};
pub use xor::generate_xor;

/// Default noise level of the XOR blobs.
pub const XOR_NOISE_SD: f64 = 0.3;
