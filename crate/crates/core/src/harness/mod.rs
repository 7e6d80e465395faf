//! Monte-Carlo checks of the finite-sample behaviour of histogram binning.
//!
//! Every sweep point gets a seed derived from the master seed and the point
//! index, and every trial a seed derived from that and the trial index. Trials
//! run in parallel and are collected in trial order, so reports do not depend
//! on the number of worker threads.

mod report;
mod sweeps;

use rand::Rng as _;

pub use report::{Check, Summary, SweepPoint, SweepReport, TrialReport};
pub use sweeps::{
    calibration_size_sweep, verify_auc_loss, verify_ece_rate, verify_mce_bound,
    verify_theta_concentration,
};

use crate::binning::{fit_histogram, BinLayout};
use crate::data::{Dataset, FeatureDataset, ScoredSample};
use crate::error::Result;
use crate::metrics::{self, BinScheme};
use crate::seed;
use crate::synth::{generate_xor, LogisticModel, OracleSpec};

/// `sqrt(2B ln(2B/delta) / N)`: the MCE level exceeded with probability at most `delta`.
pub fn mce_bound(bins: usize, n: usize, delta: f64) -> f64 {
    let b = bins as f64;
    (2.0 * b * (2.0 * b / delta).ln() / n as f64).sqrt()
}

/// `2 exp(-2 N eps^2 / B)`: Hoeffding bound on `P(|theta_hat_i - theta_i| >= eps)`.
pub fn hoeffding_bound(n: usize, bins: usize, eps: f64) -> f64 {
    2.0 * (-2.0 * n as f64 * eps * eps / bins as f64).exp()
}

/// Held-out sample size used when none is given: `max(10 N, 10^5)`.
pub fn default_test_size(n_cal: usize) -> usize {
    (10 * n_cal).max(100_000)
}

/// Something that can draw fresh labelled scores.
pub trait ScoreSource: Sync {
    fn draw(&self, n: usize, rng: &mut seed::Rng) -> Result<Dataset>;

    /// Ground truth, when the source is an oracle.
    fn oracle(&self) -> Option<&OracleSpec> {
        None
    }

    fn describe(&self) -> String;
}

impl ScoreSource for OracleSpec {
    fn draw(&self, n: usize, rng: &mut seed::Rng) -> Result<Dataset> {
        Ok(self.generate_with(n, rng))
    }

    fn oracle(&self) -> Option<&OracleSpec> {
        Some(self)
    }

    fn describe(&self) -> String {
        format!("oracle {}", self.curve)
    }
}

/// Fresh XOR rows scored by a fixed, already trained logistic model.
#[derive(Debug, Clone)]
pub struct ScoredXor {
    pub model: LogisticModel,
    pub noise_sd: f64,
}

impl ScoreSource for ScoredXor {
    fn draw(&self, n: usize, rng: &mut seed::Rng) -> Result<Dataset> {
        let rows: FeatureDataset = generate_xor(n, self.noise_sd, rng.random())?;
        rows.score_with(&self.model)
    }

    fn describe(&self) -> String {
        format!("xor scored by {} logistic model", self.model.feature_map)
    }
}

/// How calibration error is measured on the held-out set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricBins {
    /// Group test points by the fitted histogram's own bins.
    Layout,
    /// Equal-frequency reliability diagram with this many bins.
    Reliability(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TrialSetup {
    pub n_cal: usize,
    /// `None` selects `round(N^(1/3))`.
    pub bins: Option<usize>,
    pub test_size: usize,
    pub metric: MetricBins,
    pub delta: Option<f64>,
}

/// `(mce, ece)` of calibrated test predictions grouped by the layout's bins.
fn layout_errors(layout: &BinLayout, test: &Dataset) -> (f64, f64) {
    let b = layout.num_bins();
    let mut counts = vec![0usize; b];
    let mut positives = vec![0usize; b];
    for s in test.samples() {
        let j = layout.locate(s.score());
        counts[j] += 1;
        positives[j] += usize::from(s.label());
    }
    let total = test.len() as f64;
    let (mut mce, mut ece) = (0.0_f64, 0.0);
    for j in 0..b {
        if counts[j] == 0 {
            continue;
        }
        let predicted = layout
            .theta_hat(layout.answering_bin(j))
            .expect("answering bin is non-empty");
        let gap = (positives[j] as f64 / counts[j] as f64 - predicted).abs();
        mce = mce.max(gap);
        ece += counts[j] as f64 / total * gap;
    }
    (mce, ece)
}

fn auc_or_none(samples: &[ScoredSample]) -> Option<f64> {
    metrics::auc(samples).ok()
}

/// One trial: fit histogram binning on a fresh calibration sample and measure
/// it on a fresh test sample.
pub(crate) fn run_trial(
    source: &dyn ScoreSource,
    setup: &TrialSetup,
    trial: usize,
    seed: u64,
) -> Result<TrialReport> {
    let mut rng = seed::rng(seed);
    let cal = source.draw(setup.n_cal, &mut rng)?;
    let test = source.draw(setup.test_size, &mut rng)?;
    let layout = fit_histogram(&cal, setup.bins, BinScheme::EqualFrequency)?;
    let calibrated = test.map_scores(|s| layout.apply(s))?;
    let (mce, ece) = match setup.metric {
        MetricBins::Layout => layout_errors(&layout, &test),
        MetricBins::Reliability(b) => {
            let bins = metrics::reliability(calibrated.samples(), b, BinScheme::EqualFrequency)?;
            (metrics::mce(&bins), metrics::ece(&bins))
        }
    };
    let auc_raw = auc_or_none(test.samples());
    let auc_calibrated = auc_or_none(calibrated.samples());
    let max_theta_deviation = source.oracle().map(|spec| {
        let theta = spec.true_theta(&layout);
        (0..layout.num_bins())
            .filter_map(|j| layout.theta_hat(j).map(|t| (t - theta[j]).abs()))
            .fold(0.0, f64::max)
    });
    Ok(TrialReport {
        trial,
        seed,
        n_cal: setup.n_cal,
        bins: layout.num_bins(),
        mce,
        ece,
        auc_raw,
        auc_calibrated,
        auc_loss: auc_raw.zip(auc_calibrated).map(|(r, c)| r - c),
        mce_bound: setup.delta.map(|d| mce_bound(layout.num_bins(), setup.n_cal, d)),
        max_theta_deviation,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
