//! Sample types, CSV ingestion and calibration-set construction.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_score, invalid, Error, Result};
use crate::seed;

/// A base-classifier score in `[0, 1]` paired with the true binary label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    score: f64,
    label: bool,
}

impl ScoredSample {
    pub fn new(score: f64, label: bool) -> Result<Self> {
        Ok(Self {
            score: check_score(score)?,
            label,
        })
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn label(&self) -> bool {
        self.label
    }

    /// The label as `0.0` / `1.0`.
    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// An ordered collection of scored samples with cached class counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<ScoredSample>,
    positives: usize,
}

impl Dataset {
    pub fn new(samples: Vec<ScoredSample>) -> Self {
        let positives = samples.iter().filter(|s| s.label).count();
        Self { samples, positives }
    }

    /// Builds a dataset from raw `(score, label)` pairs, validating every score.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, bool)>,
    {
        let samples = pairs
            .into_iter()
            .map(|(s, z)| ScoredSample::new(s, z))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(samples))
    }

    pub fn samples(&self) -> &[ScoredSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of positive samples (`m`).
    pub fn positives(&self) -> usize {
        self.positives
    }

    /// Number of negative samples (`n`).
    pub fn negatives(&self) -> usize {
        self.samples.len() - self.positives
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.score)
    }

    /// Fails unless both classes are present.
    pub fn require_two_classes(&self) -> Result<()> {
        if self.positives == 0 || self.negatives() == 0 {
            return Err(Error::OneClass {
                positives: self.positives,
                negatives: self.negatives(),
            });
        }
        Ok(())
    }

    /// Scores of one class, in dataset order.
    pub fn class_scores(&self, label: bool) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.label == label)
            .map(|s| s.score)
            .collect()
    }

    /// Disjoint `(a, b)` partition with `|a| = round(fraction * N)`.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let (a, b) = split_indices(self.len(), fraction, seed)?;
        let pick = |idx: &[usize]| Dataset::new(idx.iter().map(|&i| self.samples[i]).collect());
        Ok((pick(&a), pick(&b)))
    }

    /// Replaces every score by `f(score)`, keeping labels.
    pub fn map_scores<F>(&self, mut f: F) -> Result<Dataset>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let samples = self
            .samples
            .iter()
            .map(|s| ScoredSample::new(f(s.score)?, s.label))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(samples))
    }
}

impl FromIterator<ScoredSample> for Dataset {
    fn from_iter<T: IntoIterator<Item = ScoredSample>>(iter: T) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}

/// Feature vectors of a fixed dimension with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    dim: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl FeatureDataset {
    pub fn new(dim: usize, rows: Vec<(Vec<f64>, bool)>) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (i, (x, z)) in rows.into_iter().enumerate() {
            if x.len() != dim {
                return Err(Error::Row {
                    row: i + 1,
                    message: format!("expected {dim} features, found {}", x.len()),
                });
            }
            features.push(x);
            labels.push(z);
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], bool)> + '_ {
        self.features
            .iter()
            .zip(&self.labels)
            .map(|(x, &z)| (x.as_slice(), z))
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureDataset {
        FeatureDataset {
            dim: self.dim,
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn split(&self, fraction: f64, seed: u64) -> Result<(FeatureDataset, FeatureDataset)> {
        let (a, b) = split_indices(self.len(), fraction, seed)?;
        Ok((self.subset(&a), self.subset(&b)))
    }

    /// Scores every row with `scorer`, producing a calibration dataset.
    pub fn score_with<S: Scorer + ?Sized>(&self, scorer: &S) -> Result<Dataset> {
        self.rows()
            .map(|(x, z)| ScoredSample::new(scorer.score(x), z))
            .collect()
    }
}

/// A trained base classifier mapping a feature vector to a score in `[0, 1]`.
pub trait Scorer {
    fn score(&self, features: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Scorer for F {
    fn score(&self, features: &[f64]) -> f64 {
        self(features)
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    idx
}

/// Seeded random partition of `0..n`; both index lists are returned sorted.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Empty);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    let take = ((fraction * n as f64).round() as usize).min(n);
    let idx = shuffled(n, seed);
    let mut a = idx[..take].to_vec();
    let mut b = idx[take..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

/// Builds an out-of-fold calibration set.
///
/// Rows are shuffled with `seed` and cut into `k` contiguous folds. For each
/// fold a model is trained on the remaining rows and used to score the held-out
/// rows, so no score comes from a model that saw its own row. `k == N` gives
/// leave-one-out. The output keeps the input row order.
pub fn kfold_calibration_set<T, S>(
    data: &FeatureDataset,
    k: usize,
    trainer: T,
    seed: u64,
) -> Result<Dataset>
where
    T: Fn(&FeatureDataset) -> Result<S>,
    S: Scorer,
{
    let n = data.len();
    if k < 2 || k > n {
        return Err(invalid(format!("fold count {k} must lie in [2, {n}]")));
    }
    let order = shuffled(n, seed);
    let mut scores: Vec<Option<f64>> = vec![None; n];
    for fold in 0..k {
        let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
        let held_out = &order[lo..hi];
        let mut train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        train.sort_unstable();
        let model = trainer(&data.subset(&train)).map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })?;
        for &i in held_out {
            scores[i] = Some(model.score(data.features(i)));
        }
    }
    scores
        .into_iter()
        .zip(data.labels())
        .map(|(s, &z)| ScoredSample::new(s.expect("every row belongs to one fold"), z))
        .collect()
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

pub(crate) fn parse_label(cell: &str) -> Option<bool> {
    match cell.trim() {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Reads `(score, label)` pairs from a headed CSV file, in file order.
pub fn load_scored_csv(path: &Path, score_column: &str, label_column: &str) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_scored_csv(file, score_column, label_column)
}

pub fn read_scored_csv<R: std::io::Read>(
    reader: R,
    score_column: &str,
    label_column: &str,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let si = find_column(&headers, score_column)?;
    let li = find_column(&headers, label_column)?;
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |j: usize| record.get(j).unwrap_or("").trim();
        let score: f64 = cell(si).parse().map_err(|_| Error::Row {
            row,
            message: format!("cannot parse score `{}`", cell(si)),
        })?;
        let label = parse_label(cell(li)).ok_or_else(|| Error::Row {
            row,
            message: format!("label `{}` is not 0 or 1", cell(li)),
        })?;
        let sample = ScoredSample::new(score, label).map_err(|_| Error::Row {
            row,
            message: format!("score {score} outside [0, 1]"),
        })?;
        samples.push(sample);
    }
    Ok(Dataset::new(samples))
}

/// Writes a dataset as `score,label` CSV.
pub fn write_scored_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["score", "label"])?;
    for s in data.samples() {
        w.write_record([s.score.to_string(), u8::from(s.label).to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes a feature dataset as `x1,...,xd,label` CSV.
pub fn write_feature_csv<W: Write>(data: &FeatureDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (x, z) in data.rows() {
        let mut rec: Vec<String> = x.iter().map(f64::to_string).collect();
        rec.push(u8::from(z).to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
