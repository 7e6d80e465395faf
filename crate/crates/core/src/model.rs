//! A single type over every calibration method, with JSON persistence.
//!
//! Models serialize as a JSON object tagged by `method`. Floating-point values
//! are written in shortest round-trip form, so a loaded model reproduces the
//! in-memory outputs bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::{fit_histogram, BinLayout};
use crate::data::Dataset;
use crate::density::{fit_dpm, fit_kde, DpmConfig, DpmModel, KdeForm, KdeModel};
use crate::error::{invalid, Error, Result};
use crate::metrics::BinScheme;
use crate::monotone::{fit_isotonic, fit_platt, IsotonicModel, PlattModel};

/// Calibration method names as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Equal-frequency histogram binning.
    Histogram,
    /// Equal-width histogram binning.
    HistogramWidth,
    Platt,
    Isotonic,
    /// KDE with one bandwidth per class.
    Kde,
    /// KDE with a single bandwidth (Nadaraya-Watson).
    KdeShared,
    Dpm,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Histogram,
        Method::HistogramWidth,
        Method::Platt,
        Method::Isotonic,
        Method::Kde,
        Method::KdeShared,
        Method::Dpm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Histogram => "histogram",
            Method::HistogramWidth => "histogram-width",
            Method::Platt => "platt",
            Method::Isotonic => "isotonic",
            Method::Kde => "kde",
            Method::KdeShared => "kde-shared",
            Method::Dpm => "dpm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Histogram bin count; `None` selects `round(N^(1/3))`.
    pub bins: Option<usize>,
    pub platt_max_iter: usize,
    pub platt_tol: f64,
    pub kde_form: KdeForm,
    pub dpm: DpmConfig,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bins: None,
            platt_max_iter: crate::monotone::DEFAULT_MAX_ITER,
            platt_tol: crate::monotone::DEFAULT_TOL,
            kde_form: KdeForm::Bayes,
            dpm: DpmConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationModel {
    Histogram(BinLayout),
    Platt(PlattModel),
    Isotonic(IsotonicModel),
    Kde(KdeModel),
    Dpm(DpmModel),
}

impl CalibrationModel {
    pub fn fit(method: Method, data: &Dataset, options: &FitOptions) -> Result<Self> {
        Ok(match method {
            Method::Histogram => {
                CalibrationModel::Histogram(fit_histogram(data, options.bins, BinScheme::EqualFrequency)?)
            }
            Method::HistogramWidth => {
                CalibrationModel::Histogram(fit_histogram(data, options.bins, BinScheme::EqualWidth)?)
            }
            Method::Platt => {
                CalibrationModel::Platt(fit_platt(data, options.platt_max_iter, options.platt_tol)?.model)
            }
            Method::Isotonic => CalibrationModel::Isotonic(fit_isotonic(data)?),
            Method::Kde => CalibrationModel::Kde(fit_kde(data, false)?.with_form(options.kde_form)),
            Method::KdeShared => CalibrationModel::Kde(fit_kde(data, true)?.with_form(options.kde_form)),
            Method::Dpm => CalibrationModel::Dpm(fit_dpm(data, &options.dpm, options.seed)?),
        })
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            CalibrationModel::Histogram(_) => "histogram",
            CalibrationModel::Platt(_) => "platt",
            CalibrationModel::Isotonic(_) => "isotonic",
            CalibrationModel::Kde(_) => "kde",
            CalibrationModel::Dpm(_) => "dpm",
        }
    }

    pub fn apply(&self, score: f64) -> Result<f64> {
        match self {
            CalibrationModel::Histogram(m) => m.apply(score),
            CalibrationModel::Platt(m) => m.apply(score),
            CalibrationModel::Isotonic(m) => m.apply(score),
            CalibrationModel::Kde(m) => m.apply(score),
            CalibrationModel::Dpm(m) => m.apply(score),
        }
    }

    /// Replaces every score of `data` by its calibrated value.
    pub fn calibrate(&self, data: &Dataset) -> Result<Dataset> {
        data.map_scores(|s| self.apply(s))
    }

    /// One-line description of the fitted parameters.
    pub fn summary(&self) -> String {
        match self {
            CalibrationModel::Histogram(l) => {
                format!("scheme={} B={}", l.scheme(), l.num_bins())
            }
            CalibrationModel::Platt(p) => format!("A={} B={}", p.a, p.b),
            CalibrationModel::Isotonic(m) => format!("breakpoints={}", m.breakpoints().len()),
            CalibrationModel::Kde(k) => format!("h0={} h1={} prior={}", k.h0, k.h1, k.prior),
            CalibrationModel::Dpm(d) => format!(
                "T={} alpha={} prior={} elbo_pos={} elbo_neg={}",
                d.truncation, d.alpha, d.prior, d.positive.elbo, d.negative.elbo
            ),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelRecord::from(self.clone()))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelRecord>(text)?.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct HistogramRecord {
    scheme: BinScheme,
    edges: Vec<f64>,
    /// Informational; recomputed from the counts on load.
    theta: Vec<Option<f64>>,
    counts: Vec<usize>,
    positives: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
enum ModelRecord {
    Histogram(HistogramRecord),
    Platt(PlattModel),
    Isotonic(IsotonicModel),
    Kde(KdeModel),
    Dpm(DpmModel),
}

impl From<CalibrationModel> for ModelRecord {
    fn from(model: CalibrationModel) -> Self {
        match model {
            CalibrationModel::Histogram(l) => ModelRecord::Histogram(HistogramRecord {
                scheme: l.scheme(),
                edges: l.edges().to_vec(),
                theta: (0..l.num_bins()).map(|j| l.theta_hat(j)).collect(),
                counts: l.counts().to_vec(),
                positives: l.positives().to_vec(),
            }),
            CalibrationModel::Platt(m) => ModelRecord::Platt(m),
            CalibrationModel::Isotonic(m) => ModelRecord::Isotonic(m),
            CalibrationModel::Kde(m) => ModelRecord::Kde(m),
            CalibrationModel::Dpm(m) => ModelRecord::Dpm(m),
        }
    }
}

impl TryFrom<ModelRecord> for CalibrationModel {
    type Error = Error;

    fn try_from(record: ModelRecord) -> Result<Self> {
        Ok(match record {
            ModelRecord::Histogram(h) => CalibrationModel::Histogram(BinLayout::from_parts(
                h.scheme,
                h.edges,
                h.counts,
                h.positives,
            )?),
            ModelRecord::Platt(m) => CalibrationModel::Platt(PlattModel::new(m.a, m.b)?),
            ModelRecord::Isotonic(m) => CalibrationModel::Isotonic(IsotonicModel::new(
                m.breakpoints().to_vec(),
                m.values().to_vec(),
            )?),
            ModelRecord::Kde(m) => {
                m.validate()?;
                CalibrationModel::Kde(m)
            }
            ModelRecord::Dpm(m) => {
                m.validate()?;
                CalibrationModel::Dpm(m)
            }
        })
    }
}
