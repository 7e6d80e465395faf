//! Plug-in calibrators that estimate each class-conditional score density and
//! combine them with the class priors through Bayes' rule.

mod dpm;
mod kde;

pub use dpm::{fit_dpm, ClassMixture, DpmConfig, DpmModel, NormalGamma, Stick};
pub use kde::{boxcar, fit_kde, silverman_bandwidth, KdeForm, KdeModel, MIN_BANDWIDTH};
