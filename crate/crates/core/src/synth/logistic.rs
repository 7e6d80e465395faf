use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data::{FeatureDataset, Scorer};
use crate::error::{invalid, Error, Result};

/// Basis expansion applied before the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMap {
    /// `[1, x_1, ..., x_d]`
    Linear,
    /// Linear terms plus all products `x_i x_j` with `i <= j`.
    Quadratic,
}

impl FeatureMap {
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + x.len() * (x.len() + 3) / 2);
        out.push(1.0);
        out.extend_from_slice(x);
        if *self == FeatureMap::Quadratic {
            for i in 0..x.len() {
                for j in i..x.len() {
                    out.push(x[i] * x[j]);
                }
            }
        }
        out
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMap::Linear => "linear",
            FeatureMap::Quadratic => "quadratic",
        })
    }
}

impl FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FeatureMap::Linear),
            "quadratic" => Ok(FeatureMap::Quadratic),
            other => Err(invalid(format!("unknown feature map `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticConfig {
    pub feature_map: FeatureMap,
    /// Ridge penalty on every coefficient except the intercept.
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl LogisticConfig {
    pub fn new(feature_map: FeatureMap) -> Self {
        Self {
            feature_map,
            l2: 1.0,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub feature_map: FeatureMap,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Smallest margin kept between a score and the ends of `[0, 1]`.
const SCORE_MARGIN: f64 = f64::EPSILON / 2.0;

impl LogisticModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.feature_map
            .expand(x)
            .iter()
            .zip(&self.weights)
            .map(|(a, b)| a * b)
            .sum()
    }
}

impl Scorer for LogisticModel {
    /// Sigmoid of the linear predictor, kept strictly inside `(0, 1)`.
    fn score(&self, features: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(features)).clamp(SCORE_MARGIN, 1.0 - SCORE_MARGIN)
    }
}

fn penalized_nll(design: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, l2: f64) -> f64 {
    let eta = design * w;
    let mut nll = 0.0;
    for (t, &z) in eta.iter().zip(y.iter()) {
        // log(1 + e^t) - z t
        let softplus = if *t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
        nll += softplus - z * t;
    }
    nll + 0.5 * l2 * w.rows(1, w.len() - 1).norm_squared()
}

/// Ridge-penalised logistic regression fitted by Newton's method (IRLS).
pub fn fit_logistic(data: &FeatureDataset, config: &LogisticConfig) -> Result<LogisticModel> {
    let pos = data.labels().iter().filter(|&&z| z).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::OneClass {
            positives: pos,
            negatives: data.len() - pos,
        });
    }
    let rows: Vec<Vec<f64>> = data.rows().map(|(x, _)| config.feature_map.expand(x)).collect();
    let p = rows[0].len();
    let design = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let y = DVector::from_iterator(data.len(), data.labels().iter().map(|&z| f64::from(u8::from(z))));
    let mut penalty = DVector::from_element(p, config.l2);
    penalty[0] = 0.0;

    let mut w = DVector::zeros(p);
    let mut objective = penalized_nll(&design, &y, &w, config.l2);
    let mut iterations = 0;
    let gradient_norm = loop {
        let prob = (&design * &w).map(sigmoid);
        let grad = design.transpose() * (&prob - &y) + penalty.component_mul(&w);
        let gradient_norm = grad.norm();
        if gradient_norm < config.tol || iterations == config.max_iter {
            break gradient_norm;
        }
        iterations += 1;
        let curvature = prob.map(|q| q * (1.0 - q));
        let mut hessian = design.transpose() * DMatrix::from_diagonal(&curvature) * &design;
        for j in 0..p {
            hessian[(j, j)] += penalty[j] + 1e-10;
        }
        let step = hessian
            .cholesky()
            .ok_or_else(|| invalid("logistic Hessian is not positive definite"))?
            .solve(&grad);
        let mut t = 1.0;
        loop {
            let candidate = &w - &step * t;
            let value = penalized_nll(&design, &y, &candidate, config.l2);
            if value <= objective || t < 1e-10 {
                w = candidate;
                objective = value;
                break;
            }
            t *= 0.5;
        }
    };
    let converged = gradient_norm < config.tol;
    if !converged {
        log::warn!(
            "logistic regression stopped after {iterations} iterations with gradient norm {gradient_norm:e}"
        );
    }
    Ok(LogisticModel {
        feature_map: config.feature_map,
        weights: w.iter().copied().collect(),
        iterations,
        gradient_norm,
        converged,
    })
}
