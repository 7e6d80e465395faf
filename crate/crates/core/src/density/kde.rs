use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_score, Error, Result};

/// Bandwidth used when all scores of a class coincide.
pub const MIN_BANDWIDTH: f64 = 1e-3;

/// Silverman's rule of thumb `1.06 * sd * count^(-1/5)`, with `sd` the
/// unbiased standard deviation of `scores`.
pub fn silverman_bandwidth(scores: &[f64]) -> Result<f64> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Silverman bandwidth needs at least 2 scores, got {n}"
        )));
    }
    if scores.iter().all(|&x| x == scores[0]) {
        return Ok(MIN_BANDWIDTH);
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    Ok(1.06 * sd * (n as f64).powf(-0.2))
}

/// Boxcar kernel `K(u) = 1/2` on `|u| <= 1`.
pub fn boxcar(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.5
    } else {
        0.0
    }
}

/// Which closed form turns the two kernel sums into a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KdeForm {
    /// `h0 S+ / (h0 S+ + h1 S-)`, the Bayes posterior with per-class
    /// densities `S / (count * h)` and priors `count / N`.
    #[default]
    Bayes,
    /// `n h0 S+ / (n h0 S+ + m h1 S-)`, kept for comparison. It does not reduce
    /// to Nadaraya-Watson when `h0 == h1` unless `m == n`.
    Printed,
}

/// Plug-in calibrator with boxcar kernel density estimates per class.
///
/// The model stores the training scores themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
    /// Bandwidth of the class-0 density.
    pub h0: f64,
    /// Bandwidth of the class-1 density.
    pub h1: f64,
    /// `m / N`.
    pub prior: f64,
    #[serde(default)]
    pub form: KdeForm,
}

/// Fits per-class Silverman bandwidths, or one bandwidth over all scores when
/// `shared_bandwidth` is set.
pub fn fit_kde(data: &Dataset, shared_bandwidth: bool) -> Result<KdeModel> {
    let positives = data.class_scores(true);
    let negatives = data.class_scores(false);
    for (label, scores) in [(1u8, &positives), (0u8, &negatives)] {
        if scores.len() < 2 {
            return Err(Error::TooFewSamples {
                label,
                count: scores.len(),
                required: 2,
            });
        }
    }
    let (h0, h1) = if shared_bandwidth {
        let all: Vec<f64> = data.scores().collect();
        let h = silverman_bandwidth(&all)?;
        (h, h)
    } else {
        (silverman_bandwidth(&negatives)?, silverman_bandwidth(&positives)?)
    };
    Ok(KdeModel {
        prior: positives.len() as f64 / data.len() as f64,
        positives,
        negatives,
        h0,
        h1,
        form: KdeForm::Bayes,
    })
}

impl KdeModel {
    pub fn validate(&self) -> Result<()> {
        let ok = !self.positives.is_empty()
            && !self.negatives.is_empty()
            && self.h0 > 0.0
            && self.h1 > 0.0
            && self.prior > 0.0
            && self.prior < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel("KDE model needs both classes and positive bandwidths".into()))
        }
    }

    pub fn with_form(mut self, form: KdeForm) -> Self {
        self.form = form;
        self
    }

    /// `(S+, S-)`: kernel sums over positives (bandwidth `h1`) and negatives (`h0`).
    pub fn kernel_sums(&self, x: f64) -> (f64, f64) {
        let sum = |xs: &[f64], h: f64| xs.iter().map(|&xi| boxcar((x - xi).abs() / h)).sum::<f64>();
        (sum(&self.positives, self.h1), sum(&self.negatives, self.h0))
    }

    /// Calibrated probability; falls back to the prior when no training score
    /// lies within either window.
    pub fn apply(&self, score: f64) -> Result<f64> {
        let x = check_score(score)?;
        let (s_pos, s_neg) = self.kernel_sums(x);
        if s_pos == 0.0 && s_neg == 0.0 {
            return Ok(self.prior);
        }
        let (wp, wn) = match self.form {
            KdeForm::Bayes => (self.h0 * s_pos, self.h1 * s_neg),
            KdeForm::Printed => {
                let (m, n) = (self.positives.len() as f64, self.negatives.len() as f64);
                (n * self.h0 * s_pos, m * self.h1 * s_neg)
            }
        };
        Ok(wp / (wp + wn))
    }
}
