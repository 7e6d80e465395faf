//! Monotone baseline calibrators: Platt scaling and isotonic regression.

mod isotonic;
mod platt;

pub use isotonic::{fit_isotonic, pav, IsotonicModel};
pub use platt::{fit_platt, PlattFit, PlattModel, DEFAULT_MAX_ITER, DEFAULT_TOL};
