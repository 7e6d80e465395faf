use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::binning::BinLayout;
use crate::data::{Dataset, ScoredSample};
use crate::error::{invalid, Error, Result};
use crate::quadrature::integrate;
use crate::seed;

/// Ground-truth calibration curve `c(y) = P(z = 1 | score = y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthCurve {
    /// `c(y) = y`: the scores are already calibrated.
    Identity,
    /// `c(y) = y^2`
    Square,
    /// `c(y) = 1 / (1 + exp(-8 (y - 0.5)))`
    LogisticWarp,
    /// Logistic warp with the labels of scores below 0.3 flipped, so the
    /// truth is not monotone in the score.
    FlippedWarp,
    /// `c(y) = p`
    Constant(f64),
}

fn logistic_warp(y: f64) -> f64 {
    1.0 / (1.0 + (-8.0 * (y - 0.5)).exp())
}

impl TruthCurve {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            TruthCurve::Identity => y,
            TruthCurve::Square => y * y,
            TruthCurve::LogisticWarp => logistic_warp(y),
            TruthCurve::FlippedWarp if y < 0.3 => 1.0 - logistic_warp(y),
            TruthCurve::FlippedWarp => logistic_warp(y),
            TruthCurve::Constant(p) => p,
        }
    }

    /// Whether `c` is non-decreasing on `[0, 1]`.
    pub fn is_monotone(&self) -> bool {
        !matches!(self, TruthCurve::FlippedWarp)
    }

    /// Whether one of the classes never occurs.
    pub fn is_degenerate(&self) -> bool {
        matches!(*self, TruthCurve::Constant(p) if p == 0.0 || p == 1.0)
    }
}

impl fmt::Display for TruthCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruthCurve::Identity => f.write_str("identity"),
            TruthCurve::Square => f.write_str("square"),
            TruthCurve::LogisticWarp => f.write_str("logistic-warp"),
            TruthCurve::FlippedWarp => f.write_str("flipped-warp"),
            TruthCurve::Constant(p) => write!(f, "constant:{p}"),
        }
    }
}

impl FromStr for TruthCurve {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => TruthCurve::Identity,
            "square" => TruthCurve::Square,
            "logistic-warp" => TruthCurve::LogisticWarp,
            "flipped-warp" => TruthCurve::FlippedWarp,
            other => {
                let p: f64 = other
                    .strip_prefix("constant:")
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| invalid(format!("unknown truth curve `{other}`")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("constant curve value {p} outside [0, 1]")));
                }
                TruthCurve::Constant(p)
            }
        })
    }
}

/// Scores uniform on `[0, 1]`, labels drawn from a known truth curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub curve: TruthCurve,
}

impl OracleSpec {
    pub fn new(curve: TruthCurve) -> Self {
        Self { curve }
    }

    /// Draws `n` samples with `y ~ U[0, 1)` and `z ~ Bernoulli(c(y))`.
    pub fn generate_with(&self, n: usize, rng: &mut seed::Rng) -> Dataset {
        (0..n)
            .map(|_| {
                let y: f64 = rng.random();
                let u: f64 = rng.random();
                ScoredSample::new(y, u < self.curve.eval(y)).expect("uniform draw in [0, 1)")
            })
            .collect()
    }

    /// `theta_i = E[c(y) | y in B_i]` for every bin of `layout`.
    pub fn true_theta(&self, layout: &BinLayout) -> Vec<f64> {
        (0..layout.num_bins())
            .map(|j| {
                let (lo, hi) = layout.bounds(j);
                let mass = integrate(|y| self.curve.eval(y), lo, hi, 1e-10);
                (mass / (hi - lo)).clamp(0.0, 1.0)
            })
            .collect()
    }

    /// `eta_i = P(y in B_i)`.
    pub fn true_eta(&self, layout: &BinLayout) -> Vec<f64> {
        (0..layout.num_bins())
            .map(|j| {
                let (lo, hi) = layout.bounds(j);
                hi - lo
            })
            .collect()
    }
}

/// Seeded oracle sample of size `n`.
pub fn generate_oracle(spec: &OracleSpec, n: usize, seed: u64) -> Dataset {
    spec.generate_with(n, &mut seed::rng(seed))
}
