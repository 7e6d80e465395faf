use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_score, Error, Result};

/// Non-decreasing step function fitted by pool adjacent violators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicModel {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl IsotonicModel {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let ok = !breakpoints.is_empty()
            && breakpoints.len() == values.len()
            && breakpoints.windows(2).all(|w| w[0] < w[1])
            && values.windows(2).all(|w| w[0] <= w[1])
            && values.iter().all(|v| (0.0..=1.0).contains(v));
        if !ok {
            return Err(Error::InvalidModel(
                "isotonic breakpoints must increase strictly and values must be non-decreasing in [0, 1]"
                    .into(),
            ));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the greatest breakpoint `<= score`; clamps to the end values
    /// outside the breakpoint range.
    pub fn apply(&self, score: f64) -> Result<f64> {
        let score = check_score(score)?;
        let k = self.breakpoints.partition_point(|&b| b <= score);
        Ok(self.values[k.saturating_sub(1)])
    }
}

/// Weighted pool adjacent violators.
///
/// Returns the least-squares non-decreasing fit to `values` with positive
/// `weights`, one output per input.
pub fn pav(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // Stack of blocks: (weighted mean, total weight, number of points)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1);
        while let Some(&(mean, weight, len)) = blocks.last() {
            if mean <= cur.0 {
                break;
            }
            blocks.pop();
            let total = weight + cur.1;
            cur = ((mean * weight + cur.0 * cur.1) / total, total, len + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(mean, _, len)| std::iter::repeat_n(mean, len))
        .collect()
}

/// Fits isotonic regression of labels on scores.
///
/// Samples are stably sorted by score and tied scores are pooled into one
/// weighted point carrying their mean label before PAV runs.
pub fn fit_isotonic(data: &Dataset) -> Result<IsotonicModel> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    let mut pairs: Vec<(f64, f64)> = data.samples().iter().map(|s| (s.score(), s.target())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut breakpoints = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (score, target) in pairs {
        if breakpoints.last() == Some(&score) {
            *sums.last_mut().unwrap() += target;
            *weights.last_mut().unwrap() += 1.0;
        } else {
            breakpoints.push(score);
            sums.push(target);
            weights.push(1.0);
        }
    }
    let means: Vec<f64> = sums.iter().zip(&weights).map(|(s, w)| s / w).collect();
    let values = pav(&means, &weights)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    IsotonicModel::new(breakpoints, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_labels(labels: &[u8]) -> Vec<f64> {
        let data = Dataset::from_pairs(
            labels
                .iter()
                .enumerate()
                .map(|(i, &z)| (i as f64 / 10.0, z == 1)),
        )
        .unwrap();
        fit_isotonic(&data).unwrap().values().to_vec()
    }

    #[test]
    fn alternating_labels() {
        assert_eq!(fit_labels(&[0, 1, 0, 1]), vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn monotone_input_unchanged() {
        assert_eq!(fit_labels(&[0, 0, 1, 1]), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn raw_pav() {
        assert_eq!(pav(&[1.0, 3.0, 2.0], &[1.0; 3]), vec![1.0, 2.5, 2.5]);
        assert_eq!(pav(&[3.0, 2.0, 1.0], &[1.0; 3]), vec![2.0; 3]);
        assert_eq!(pav(&[2.0, 0.0], &[3.0, 1.0]), vec![1.5, 1.5]);
    }

    #[test]
    fn ties_pooled_before_pav() {
        let data = Dataset::from_pairs([(0.5, true), (0.2, false), (0.5, false), (0.5, true)]).unwrap();
        let model = fit_isotonic(&data).unwrap();
        assert_eq!(model.breakpoints(), &[0.2, 0.5]);
        assert_eq!(model.values(), &[0.0, 2.0 / 3.0]);
    }

    #[test]
    fn step_lookup() {
        let model = IsotonicModel::new(vec![0.2, 0.6], vec![0.25, 0.75]).unwrap();
        assert_eq!(model.apply(0.1).unwrap(), 0.25);
        assert_eq!(model.apply(0.6).unwrap(), 0.75);
        assert_eq!(model.apply(0.4).unwrap(), 0.25);
        assert_eq!(model.apply(1.0).unwrap(), 0.75);
        assert!(model.apply(1.01).is_err());
    }

    #[test]
    fn rejects_bad_models_and_empty_data() {
        assert!(IsotonicModel::new(vec![0.2, 0.1], vec![0.1, 0.2]).is_err());
        assert!(IsotonicModel::new(vec![0.1, 0.2], vec![0.3, 0.2]).is_err());
        assert!(matches!(fit_isotonic(&Dataset::default()), Err(Error::Empty)));
    }
}
