//! Calibration and discrimination measures.
//!
//! All functions take predictions as [`ScoredSample`]s, where the score is the
//! (possibly calibrated) predicted probability of the positive class.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::ScoredSample;
use crate::error::{invalid, Error, Result};

/// Default number of reliability bins.
pub const DEFAULT_BINS: usize = 10;

/// How a sample of scores is cut into bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinScheme {
    /// Sorted scores cut into groups whose sizes differ by at most one.
    #[default]
    EqualFrequency,
    /// Fixed edges at `i / B`.
    EqualWidth,
}

impl std::fmt::Display for BinScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinScheme::EqualFrequency => "equal-frequency",
            BinScheme::EqualWidth => "equal-width",
        })
    }
}

/// One bin of a reliability diagram.
///
/// Empty bins (possible under equal-width binning) carry `count == 0`,
/// `weight == 0` and zero `observed`/`expected`; they never contribute to ECE
/// or MCE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub index: usize,
    /// Fraction of positives in the bin (`o_i`).
    pub observed: f64,
    /// Mean prediction in the bin (`e_i`).
    pub expected: f64,
    /// Fraction of all predictions that fall in the bin.
    pub weight: f64,
    pub count: usize,
}

impl ReliabilityBin {
    pub fn gap(&self) -> f64 {
        (self.observed - self.expected).abs()
    }
}

/// Assigns predictions to bins on the prediction axis and summarises each bin.
pub fn reliability(
    predictions: &[ScoredSample],
    num_bins: usize,
    scheme: BinScheme,
) -> Result<Vec<ReliabilityBin>> {
    if predictions.is_empty() {
        return Err(Error::Empty);
    }
    if num_bins == 0 {
        return Err(invalid("number of bins must be at least 1"));
    }
    let total = predictions.len();
    // (sum of predictions, positives, count) per bin
    let mut acc = vec![(0.0_f64, 0_usize, 0_usize); num_bins];
    match scheme {
        BinScheme::EqualFrequency => {
            let mut sorted = predictions.to_vec();
            sorted.sort_by(|a, b| a.score().total_cmp(&b.score()));
            for (bin, slot) in acc.iter_mut().enumerate() {
                let (lo, hi) = (bin * total / num_bins, (bin + 1) * total / num_bins);
                for s in &sorted[lo..hi] {
                    slot.0 += s.score();
                    slot.1 += usize::from(s.label());
                    slot.2 += 1;
                }
            }
        }
        BinScheme::EqualWidth => {
            for s in predictions {
                let bin = ((s.score() * num_bins as f64) as usize).min(num_bins - 1);
                let slot = &mut acc[bin];
                slot.0 += s.score();
                slot.1 += usize::from(s.label());
                slot.2 += 1;
            }
        }
    }
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(index, (sum, pos, count))| {
            if count == 0 {
                ReliabilityBin {
                    index,
                    observed: 0.0,
                    expected: 0.0,
                    weight: 0.0,
                    count,
                }
            } else {
                ReliabilityBin {
                    index,
                    observed: pos as f64 / count as f64,
                    expected: sum / count as f64,
                    weight: count as f64 / total as f64,
                    count,
                }
            }
        })
        .collect())
}

/// Expected calibration error: `sum_i P(i) |o_i - e_i|`. An empty list gives 0.
pub fn ece(bins: &[ReliabilityBin]) -> f64 {
    bins.iter().map(|b| b.weight * b.gap()).sum()
}

/// Maximum calibration error over non-empty bins. An empty list gives 0.
pub fn mce(bins: &[ReliabilityBin]) -> f64 {
    bins.iter()
        .filter(|b| b.count > 0)
        .map(ReliabilityBin::gap)
        .fold(0.0, f64::max)
}

/// Empirical AUC with ties counted as one half.
///
/// Equals `(1/mn) sum_{z_i=1} sum_{z_j=0} [I(y_i > y_j) + I(y_i = y_j)/2]`,
/// computed through midranks in `O(N log N)`.
pub fn auc(predictions: &[ScoredSample]) -> Result<f64> {
    let m = predictions.iter().filter(|s| s.label()).count();
    let n = predictions.len() - m;
    if m == 0 || n == 0 {
        return Err(Error::OneClass {
            positives: m,
            negatives: n,
        });
    }
    let mut sorted: Vec<(f64, bool)> = predictions.iter().map(|s| (s.score(), s.label())).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the rank sum of positives, kept integral: a tie group spanning
    // 1-based ranks [lo+1, hi] has midrank (lo + 1 + hi) / 2.
    let mut twice_rank_sum: u128 = 0;
    let mut lo = 0;
    while lo < sorted.len() {
        let mut hi = lo + 1;
        while hi < sorted.len() && sorted[hi].0 == sorted[lo].0 {
            hi += 1;
        }
        let pos = sorted[lo..hi].iter().filter(|s| s.1).count() as u128;
        twice_rank_sum += pos * (lo as u128 + 1 + hi as u128);
        lo = hi;
    }
    let (m, n) = (m as u128, n as u128);
    // U = R - m(m+1)/2; AUC = U / (mn) = (2R - m(m+1)) / (2mn)
    let twice_u = twice_rank_sum - m * (m + 1);
    Ok(twice_u as f64 / (2 * m * n) as f64)
}

/// Root mean squared error between predictions and labels.
pub fn rmse(predictions: &[ScoredSample]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty);
    }
    let sq: f64 = predictions
        .iter()
        .map(|s| (s.score() - s.target()).powi(2))
        .sum();
    Ok((sq / predictions.len() as f64).sqrt())
}

/// Fraction of predictions where `score >= threshold` agrees with the label.
pub fn accuracy(predictions: &[ScoredSample], threshold: f64) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty);
    }
    let hits = predictions
        .iter()
        .filter(|s| (s.score() >= threshold) == s.label())
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Reliability bins together with the five summary measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    pub mce: f64,
    pub rmse: f64,
    pub accuracy: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

impl ReliabilityReport {
    pub fn evaluate(predictions: &[ScoredSample], num_bins: usize, scheme: BinScheme) -> Result<Self> {
        let bins = reliability(predictions, num_bins, scheme)?;
        Ok(Self {
            ece: ece(&bins),
            mce: mce(&bins),
            rmse: rmse(predictions)?,
            accuracy: accuracy(predictions, 0.5)?,
            auc: auc(predictions).ok(),
            bins,
        })
    }

    /// Writes the bins as `bin_index,e_i,o_i,weight,count` CSV.
    pub fn write_bins_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_index", "e_i", "o_i", "weight", "count"])?;
        for b in &self.bins {
            w.write_record([
                b.index.to_string(),
                b.expected.to_string(),
                b.observed.to_string(),
                b.weight.to_string(),
                b.count.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
