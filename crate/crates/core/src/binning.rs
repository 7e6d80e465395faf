//! Histogram-binning calibration.
//!
//! A [`BinLayout`] partitions `[0, 1]` into right-open intervals (the last one
//! closed at 1) and records, per bin, how many calibration samples fell in it
//! and how many of those were positive. A score is calibrated to the positive
//! fraction `m_j / N_j` of its bin.

use num::{BigInt, BigRational, ToPrimitive, Zero};

use crate::data::Dataset;
use crate::error::{check_score, invalid, Error, Result};
use crate::metrics::BinScheme;

/// Default bin count `round(N^(1/3))`, clamped to `[1, N]`.
pub fn default_bin_count(n: usize) -> usize {
    ((n as f64).cbrt().round() as usize).clamp(1, n.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    scheme: BinScheme,
    edges: Vec<f64>,
    counts: Vec<usize>,
    positives: Vec<usize>,
}

impl BinLayout {
    /// Rebuilds a layout from stored edges and per-bin counts.
    pub fn from_parts(
        scheme: BinScheme,
        edges: Vec<f64>,
        counts: Vec<usize>,
        positives: Vec<usize>,
    ) -> Result<Self> {
        let b = counts.len();
        if b == 0 || edges.len() != b + 1 || positives.len() != b {
            return Err(Error::InvalidModel(format!(
                "{} edges, {} counts, {} positive counts",
                edges.len(),
                counts.len(),
                positives.len()
            )));
        }
        if edges[0] != 0.0 || edges[b] != 1.0 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(
                "edges must increase strictly from 0 to 1".into(),
            ));
        }
        if positives.iter().zip(&counts).any(|(p, c)| p > c) || counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidModel("inconsistent bin counts".into()));
        }
        Ok(Self {
            scheme,
            edges,
            counts,
            positives,
        })
    }

    pub fn scheme(&self) -> BinScheme {
        self.scheme
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// `N_i` per bin.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `m_i` per bin.
    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    /// `n_i` per bin.
    pub fn negatives(&self) -> Vec<usize> {
        self.counts
            .iter()
            .zip(&self.positives)
            .map(|(c, p)| c - p)
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `m_i / N_i`, or `None` for an empty bin.
    pub fn theta_hat(&self, bin: usize) -> Option<f64> {
        match self.counts[bin] {
            0 => None,
            c => Some(self.positives[bin] as f64 / c as f64),
        }
    }

    /// `N_i / N`.
    pub fn eta_hat(&self, bin: usize) -> f64 {
        self.counts[bin] as f64 / self.total() as f64
    }

    /// `[lo, hi)` bounds of a bin (the last bin also contains `hi = 1`).
    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        (self.edges[bin], self.edges[bin + 1])
    }

    /// Index of the bin containing `score`: bins are right-open, the last is closed.
    pub fn locate(&self, score: f64) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&e| e <= score)
    }

    /// The non-empty bin used to answer a query landing in `bin`: the bin
    /// itself, or the nearest non-empty one (lower on ties).
    pub fn answering_bin(&self, bin: usize) -> usize {
        if self.counts[bin] > 0 {
            return bin;
        }
        (1..self.num_bins())
            .flat_map(|d| [bin.checked_sub(d), Some(bin + d)])
            .flatten()
            .find(|&j| j < self.num_bins() && self.counts[j] > 0)
            .expect("a fitted layout has at least one non-empty bin")
    }

    /// Calibrated probability for `score`.
    pub fn apply(&self, score: f64) -> Result<f64> {
        let bin = self.answering_bin(self.locate(check_score(score)?));
        Ok(self.theta_hat(bin).expect("answering bin is non-empty"))
    }
}

/// Fits histogram binning on `data` with `bins` bins (default `round(N^(1/3))`).
///
/// Equal-frequency layouts cut the sorted scores into groups whose sizes differ
/// by at most one and place interior edges halfway between neighbouring groups.
/// A cut that falls inside a run of tied scores is dropped, so heavily tied
/// data yields fewer than `bins` bins.
pub fn fit_histogram(data: &Dataset, bins: Option<usize>, scheme: BinScheme) -> Result<BinLayout> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    let b = bins.unwrap_or_else(|| default_bin_count(n));
    if b == 0 || b > n {
        return Err(invalid(format!("bin count {b} must lie in [1, {n}]")));
    }
    let edges = match scheme {
        BinScheme::EqualWidth => (0..=b).map(|i| i as f64 / b as f64).collect(),
        BinScheme::EqualFrequency => {
            let mut sorted: Vec<f64> = data.scores().collect();
            sorted.sort_by(f64::total_cmp);
            let mut edges = vec![0.0];
            for k in 1..b {
                let cut = k * n / b;
                let (below, above) = (sorted[cut - 1], sorted[cut]);
                if below == above {
                    continue;
                }
                let edge = 0.5 * (below + above);
                if edge > *edges.last().unwrap() && edge < 1.0 {
                    edges.push(edge);
                }
            }
            edges.push(1.0);
            edges
        }
    };
    let mut layout = BinLayout {
        scheme,
        counts: vec![0; edges.len() - 1],
        positives: vec![0; edges.len() - 1],
        edges,
    };
    for s in data.samples() {
        let bin = layout.locate(s.score());
        layout.counts[bin] += 1;
        layout.positives[bin] += usize::from(s.label());
    }
    Ok(layout)
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Bayes-rule posterior with histogram class-conditional densities.
///
/// Evaluates `P(z=1) p(y|z=1) / (P(z=1) p(y|z=1) + P(z=0) p(y|z=0))` with
/// priors `m/N`, `n/N` and densities `p(y|z=t) = theta_j^t / h_j` on the bin
/// `j` containing `y`, where `theta_j^1 = m_j/m`, `theta_j^0 = n_j/n` are
/// recounted from `data`. The arithmetic is exact (rationals) and rounded once
/// at the end. Where both densities vanish (an empty bin) the expression is
/// undefined and the nearest non-empty bin is used, as in [`BinLayout::apply`].
pub fn plug_in_estimate(data: &Dataset, layout: &BinLayout, score: f64) -> Result<f64> {
    check_score(score)?;
    data.require_two_classes()?;
    let (m, n, total) = (data.positives(), data.negatives(), data.len());
    let mut pos = vec![0usize; layout.num_bins()];
    let mut neg = vec![0usize; layout.num_bins()];
    for s in data.samples() {
        let bin = layout.locate(s.score());
        if s.label() {
            pos[bin] += 1;
        } else {
            neg[bin] += 1;
        }
    }
    let mut bin = layout.locate(score);
    if pos[bin] + neg[bin] == 0 {
        bin = (1..layout.num_bins())
            .flat_map(|d| [bin.checked_sub(d), Some(bin + d)])
            .flatten()
            .find(|&j| j < layout.num_bins() && pos[j] + neg[j] > 0)
            .ok_or(Error::Empty)?;
    }
    let (lo, hi) = layout.bounds(bin);
    let width = exact(hi) - exact(lo);
    let density_pos = ratio(pos[bin], m) / &width;
    let density_neg = ratio(neg[bin], n) / &width;
    let joint_pos = ratio(m, total) * density_pos;
    let joint_neg = ratio(n, total) * density_neg;
    let evidence = &joint_pos + joint_neg;
    debug_assert!(!evidence.is_zero());
    Ok((joint_pos / evidence).to_f64().expect("value in [0, 1]"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn six() -> Dataset {
        Dataset::from_pairs([
            (0.1, false),
            (0.2, false),
            (0.3, true),
            (0.4, false),
            (0.5, true),
            (0.6, true),
        ])
        .unwrap()
    }

    #[test]
    fn default_bins_follow_cube_root() {
        assert_eq!(default_bin_count(1000), 10);
        assert_eq!(default_bin_count(1), 1);
        assert_eq!(default_bin_count(100), 5);
        assert_eq!(default_bin_count(10_000), 22);
    }

    #[test]
    fn fit_default_bins() {
        let data = Dataset::from_pairs((0..1000).map(|i| (i as f64 / 1000.0, i % 2 == 0))).unwrap();
        let layout = fit_histogram(&data, None, BinScheme::EqualFrequency).unwrap();
        assert_eq!(layout.num_bins(), 10);
        assert!(layout.counts().iter().all(|&c| c == 100));
    }

    #[test]
    fn two_bin_hand_partition() {
        let layout = fit_histogram(&six(), Some(2), BinScheme::EqualFrequency).unwrap();
        assert!((layout.edges()[1] - 0.35).abs() < 1e-15);
        assert_eq!(layout.theta_hat(0), Some(1.0 / 3.0));
        assert_eq!(layout.theta_hat(1), Some(2.0 / 3.0));
        assert_eq!(layout.apply(0.15).unwrap(), 1.0 / 3.0);
        let edge = layout.edges()[1];
        assert_eq!(layout.apply(edge).unwrap(), 2.0 / 3.0);
        assert_eq!(layout.apply(1.0).unwrap(), 2.0 / 3.0);
        assert_eq!(layout.apply(0.0).unwrap(), 1.0 / 3.0);
        assert!(matches!(layout.apply(1.5), Err(Error::ScoreOutOfRange(_))));
    }

    #[test]
    fn all_positive_labels() {
        let data = Dataset::from_pairs((0..20).map(|i| (i as f64 / 20.0, true))).unwrap();
        for scheme in [BinScheme::EqualFrequency, BinScheme::EqualWidth] {
            let layout = fit_histogram(&data, Some(4), scheme).unwrap();
            for j in 0..layout.num_bins() {
                if let Some(t) = layout.theta_hat(j) {
                    assert_eq!(t, 1.0);
                }
            }
        }
    }

    #[test]
    fn bin_count_preconditions() {
        assert!(fit_histogram(&six(), Some(7), BinScheme::EqualFrequency).is_err());
        assert!(fit_histogram(&six(), Some(0), BinScheme::EqualFrequency).is_err());
        assert!(matches!(
            fit_histogram(&Dataset::default(), None, BinScheme::EqualWidth),
            Err(Error::Empty)
        ));
    }

    #[test]
    fn empty_bin_uses_nearest_lower_on_tie() {
        // Equal width with four bins: samples only in bins 0 and 2.
        let data = Dataset::from_pairs([(0.1, false), (0.6, true)]).unwrap();
        let layout = fit_histogram(&data, Some(2), BinScheme::EqualWidth).unwrap();
        assert_eq!(layout.apply(0.9).unwrap(), 1.0);
        let data = Dataset::from_pairs([(0.1, false), (0.6, true), (0.65, true), (0.7, false)]).unwrap();
        let layout = fit_histogram(&data, Some(4), BinScheme::EqualWidth).unwrap();
        assert_eq!(layout.counts(), &[1, 0, 3, 0]);
        // Bin 1 is equidistant from bins 0 and 2: lower wins.
        assert_eq!(layout.apply(0.3).unwrap(), 0.0);
        assert_eq!(layout.apply(0.9).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn tied_scores_merge_bins() {
        let data = Dataset::from_pairs((0..10).map(|i| (if i < 8 { 0.5 } else { 0.9 }, i % 2 == 0))).unwrap();
        let layout = fit_histogram(&data, Some(5), BinScheme::EqualFrequency).unwrap();
        assert!(layout.edges().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(layout.total(), 10);
        assert_eq!(layout.num_bins(), 2);
    }

    #[test]
    fn plug_in_examples() {
        let data = six();
        let layout = fit_histogram(&data, Some(2), BinScheme::EqualFrequency).unwrap();
        assert_eq!(plug_in_estimate(&data, &layout, 0.15).unwrap(), 1.0 / 3.0);
        let balanced = Dataset::from_pairs([(0.1, true), (0.2, false), (0.7, true), (0.8, false)]).unwrap();
        let layout = fit_histogram(&balanced, Some(2), BinScheme::EqualWidth).unwrap();
        assert_eq!(plug_in_estimate(&balanced, &layout, 0.3).unwrap(), 0.5);
        let one_class = Dataset::from_pairs([(0.1, true), (0.7, true)]).unwrap();
        assert!(matches!(
            plug_in_estimate(&one_class, &layout, 0.3),
            Err(Error::OneClass { .. })
        ));
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        prop::collection::vec((0u32..=1000, any::<bool>()), 2..60).prop_map(|v| {
            Dataset::from_pairs(v.into_iter().map(|(k, z)| (k as f64 / 1000.0, z))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn equal_frequency_counts_balanced(v in prop::collection::btree_set(0u32..100_000, 1..200), b in 1usize..20) {
            let data = Dataset::from_pairs(v.iter().map(|&k| (k as f64 / 100_000.0, k % 3 == 0))).unwrap();
            let b = b.min(data.len());
            let layout = fit_histogram(&data, Some(b), BinScheme::EqualFrequency).unwrap();
            prop_assert_eq!(layout.num_bins(), b);
            let max = layout.counts().iter().max().unwrap();
            let min = layout.counts().iter().min().unwrap();
            prop_assert!(max - min <= 1);
            let eta: f64 = (0..b).map(|j| layout.eta_hat(j)).sum();
            prop_assert!((eta - 1.0).abs() < 1e-12);
        }

        #[test]
        fn outputs_in_unit_interval_and_refit_deterministic(data in arb_dataset(), b in 1usize..8, q in 0.0f64..=1.0) {
            for scheme in [BinScheme::EqualFrequency, BinScheme::EqualWidth] {
                let b = b.min(data.len());
                let layout = fit_histogram(&data, Some(b), scheme).unwrap();
                prop_assert_eq!(&layout, &fit_histogram(&data, Some(b), scheme).unwrap());
                prop_assert!(layout.edges().windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(layout.total(), data.len());
                let y = layout.apply(q).unwrap();
                prop_assert!((0.0..=1.0).contains(&y));
            }
        }

        #[test]
        fn plug_in_identity(data in arb_dataset(), b in 1usize..8, q in 0u32..=100) {
            prop_assume!(data.positives() > 0 && data.negatives() > 0);
            let q = q as f64 / 100.0;
            for scheme in [BinScheme::EqualFrequency, BinScheme::EqualWidth] {
                let layout = fit_histogram(&data, Some(b.min(data.len())), scheme).unwrap();
                prop_assert_eq!(layout.apply(q).unwrap(), plug_in_estimate(&data, &layout, q).unwrap());
            }
        }
    }
}
