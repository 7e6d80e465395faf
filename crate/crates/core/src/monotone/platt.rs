use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_score, invalid, Result};

/// Sigmoid map `p(f) = 1 / (1 + exp(A f + B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattModel {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

/// Outcome of the Newton solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattFit {
    pub model: PlattModel,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl PlattModel {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(invalid(format!("non-finite Platt parameters ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn apply(&self, score: f64) -> Result<f64> {
        Ok(self.eval(check_score(score)?))
    }

    fn eval(&self, f: f64) -> f64 {
        let t = self.a * f + self.b;
        // 1 / (1 + e^t), written to avoid overflow for large |t|
        if t >= 0.0 {
            let e = (-t).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + t.exp())
        }
    }
}

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Negative log-likelihood of smoothed targets under `(a, b)`.
fn objective(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&f, &t)| {
            let z = a * f + b;
            if z >= 0.0 {
                t * z + (-z).exp().ln_1p()
            } else {
                (t - 1.0) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

/// Fits Platt scaling by Newton's method with backtracking line search.
///
/// Labels are replaced by the smoothed targets `(m+1)/(m+2)` and `1/(n+2)`;
/// the start point is `A = 0`, `B = ln((n+1)/(m+1))`. Running out of
/// iterations is not an error: the result carries `converged = false` and a
/// warning is logged with the final gradient norm.
pub fn fit_platt(data: &Dataset, max_iter: usize, tol: f64) -> Result<PlattFit> {
    data.require_two_classes()?;
    let (m, n) = (data.positives() as f64, data.negatives() as f64);
    let hi = (m + 1.0) / (m + 2.0);
    let lo = 1.0 / (n + 2.0);
    let scores: Vec<f64> = data.scores().collect();
    let targets: Vec<f64> = data
        .samples()
        .iter()
        .map(|s| if s.label() { hi } else { lo })
        .collect();

    const MIN_STEP: f64 = 1e-10;
    const RIDGE: f64 = 1e-12;

    let (mut a, mut b) = (0.0, ((n + 1.0) / (m + 1.0)).ln());
    let mut fval = objective(&scores, &targets, a, b);
    let mut gradient_norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (RIDGE, RIDGE, 0.0, 0.0, 0.0);
        for (&f, &t) in scores.iter().zip(&targets) {
            let z = a * f + b;
            // p = 1/(1+e^z), q = 1 - p
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        gradient_norm = g1.hypot(g2);
        if gradient_norm < tol {
            break;
        }
        iterations += 1;
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let descent = g1 * da + g2 * db;

        let mut step = 1.0;
        let mut moved = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nval = objective(&scores, &targets, na, nb);
            if nval <= fval + 1e-4 * step * descent {
                a = na;
                b = nb;
                fval = nval;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    let converged = gradient_norm < tol;
    if !converged {
        log::warn!(
            "Platt scaling stopped after {iterations} iterations with gradient norm {gradient_norm:e}"
        );
    }
    Ok(PlattFit {
        model: PlattModel::new(a, b)?,
        iterations,
        gradient_norm,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn noisy(n: usize, flip: bool) -> Dataset {
        // deterministic pseudo-random labels, P(z=1|f) increasing in f
        let mut state = 17u64;
        Dataset::from_pairs((0..n).map(|i| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            let f = i as f64 / n as f64;
            let z = u < 0.2 + 0.6 * f;
            (f, z != flip)
        }))
        .unwrap()
    }

    #[test]
    fn sigmoid_evaluation() {
        let m = PlattModel::new(-4.0, 2.0).unwrap();
        assert_eq!(m.apply(0.5).unwrap(), 0.5);
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((m.apply(1.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.8808).abs() < 1e-4);
        assert!(m.apply(-0.1).is_err());
    }

    #[test]
    fn fit_is_increasing_for_informative_scores() {
        let fit = fit_platt(&noisy(500, false), DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!(fit.model.a < 0.0);
        let grid: Vec<f64> = (0..=10_000).map(|i| fit.model.apply(i as f64 / 1e4).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn label_swap_mirrors_the_map() {
        // m = n is needed for the smoothed targets to swap exactly.
        let base = Dataset::from_pairs((0..200).map(|i| {
            let f = (i / 2) as f64 / 100.0;
            (f, (i % 2 == 0) == (i % 7 < 5))
        }))
        .unwrap();
        assert_eq!(base.positives(), base.negatives());
        let swapped = Dataset::from_pairs(base.samples().iter().map(|s| (s.score(), !s.label()))).unwrap();
        let p = fit_platt(&base, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap().model;
        let q = fit_platt(&swapped, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap().model;
        for i in 0..=100 {
            let f = i as f64 / 100.0;
            assert!((q.apply(f).unwrap() - (1.0 - p.apply(f).unwrap())).abs() < 1e-6);
        }
    }

    #[test]
    fn one_class_rejected() {
        let data = Dataset::from_pairs([(0.1, true), (0.2, true)]).unwrap();
        assert!(matches!(fit_platt(&data, 10, 1e-9), Err(Error::OneClass { .. })));
    }

    #[test]
    fn iteration_budget_reported() {
        let fit = fit_platt(&noisy(300, true), 1, 1e-14).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!(fit.gradient_norm.is_finite());
    }
}
