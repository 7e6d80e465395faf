use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::data::FeatureDataset;
use crate::error::{invalid, Result};
use crate::seed;

/// Corners of the XOR layout and their labels: same-sign corners are positive.
const CORNERS: [([f64; 2], bool); 4] = [
    ([1.0, 1.0], true),
    ([-1.0, -1.0], true),
    ([1.0, -1.0], false),
    ([-1.0, 1.0], false),
];

/// Four Gaussian blobs at `(+-1, +-1)` with XOR labels.
///
/// Corners are filled round-robin so the classes differ in size by at most one,
/// then rows are shuffled. The classes are not linearly separable.
pub fn generate_xor(n: usize, noise_sd: f64, seed: u64) -> Result<FeatureDataset> {
    if n < 4 {
        return Err(invalid(format!("XOR data needs at least 4 rows, got {n}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(invalid(format!("noise sd {noise_sd} must be finite and non-negative")));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| invalid(format!("noise sd {noise_sd}: {e}")))?;
    let mut rng = seed::rng(seed);
    let mut rows: Vec<(Vec<f64>, bool)> = (0..n)
        .map(|i| {
            let ([cx, cy], label) = CORNERS[i % 4];
            let x = vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)];
            (x, label)
        })
        .collect();
    rows.shuffle(&mut rng);
    FeatureDataset::new(2, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_corners() {
        let d = generate_xor(8, 0.0, 1).unwrap();
        for (x, z) in d.rows() {
            assert!(x.iter().all(|v| v.abs() == 1.0));
            assert_eq!(z, x[0] * x[1] > 0.0);
        }
    }

    #[test]
    fn balanced_classes() {
        let d = generate_xor(2000, 0.3, 5).unwrap();
        let pos = d.labels().iter().filter(|&&z| z).count();
        assert!(pos.abs_diff(1000) <= 1);
        let d = generate_xor(7, 0.3, 5).unwrap();
        let pos = d.labels().iter().filter(|&&z| z).count();
        assert!(pos.abs_diff(7 - pos) <= 1);
    }

    #[test]
    fn reproducible_and_validated() {
        assert_eq!(generate_xor(50, 0.3, 9).unwrap(), generate_xor(50, 0.3, 9).unwrap());
        assert!(generate_xor(3, 0.3, 9).is_err());
        assert!(generate_xor(10, -1.0, 9).is_err());
    }
}
