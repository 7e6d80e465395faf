use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Measurements from one Monte-Carlo trial of histogram binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub n_cal: usize,
    pub bins: usize,
    pub mce: f64,
    pub ece: f64,
    /// `None` when the test sample holds a single class.
    pub auc_raw: Option<f64>,
    pub auc_calibrated: Option<f64>,
    /// `auc_raw - auc_calibrated`.
    pub auc_loss: Option<f64>,
    /// Closed-form MCE bound for the configured confidence, when one applies.
    pub mce_bound: Option<f64>,
    /// `max_i |theta_hat_i - theta_i|` when the truth is known.
    pub max_theta_deviation: Option<f64>,
}

/// Mean, spread and quantiles of one quantity across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
            q05: quantile(&sorted, 0.05),
            q50: quantile(&sorted, 0.5),
            q95: quantile(&sorted, 0.95),
        })
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One named pass/fail assertion of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// One point along the sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    /// Named values in a fixed column order shared by all points of a report.
    pub values: Vec<(String, f64)>,
}

impl SweepPoint {
    pub fn new(axis_value: f64) -> Self {
        Self {
            axis_value,
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, value: f64) {
        self.values.push((name.to_string(), value));
    }

    /// Adds `name_mean`, `name_se`, `name_q05`, `name_q50`, `name_q95`.
    pub fn push_summary(&mut self, name: &str, summary: Option<Summary>) {
        let s = summary.unwrap_or(Summary {
            count: 0,
            mean: f64::NAN,
            sd: f64::NAN,
            se: f64::NAN,
            q05: f64::NAN,
            q50: f64::NAN,
            q95: f64::NAN,
        });
        for (suffix, v) in [("mean", s.mean), ("se", s.se), ("q05", s.q05), ("q50", s.q50), ("q95", s.q95)] {
            self.push(&format!("{name}_{suffix}"), v);
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Aggregated result of a Monte-Carlo sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub name: String,
    pub axis: String,
    /// Points in increasing axis order.
    pub points: Vec<SweepPoint>,
    /// Fitted slope of `ln(mean)` against `ln(axis)`, for rate checks.
    pub slope: Option<f64>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub trials: Vec<TrialReport>,
}

impl SweepReport {
    pub fn new(name: &str, axis: &str) -> Self {
        Self {
            name: name.to_string(),
            axis: axis.to_string(),
            points: Vec::new(),
            slope: None,
            checks: Vec::new(),
            notes: Vec::new(),
            trials: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One row per point: the axis value followed by the point's columns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.axis.clone()];
        if let Some(first) = self.points.first() {
            header.extend(first.values.iter().map(|(k, _)| k.clone()));
        }
        w.write_record(&header)?;
        for p in &self.points {
            let mut row = vec![p.axis_value.to_string()];
            row.extend(p.values.iter().map(|(_, v)| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Per-trial measurements as CSV.
    pub fn write_trials_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for t in &self.trials {
            w.serialize(t)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `{"assertion": "pass"|"fail", ...}` summary.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct JsonSummary<'a> {
            name: &'a str,
            assertion: &'static str,
            axis: &'a str,
            slope: Option<f64>,
            checks: &'a [Check],
            notes: &'a [String],
            values: Vec<serde_json::Map<String, serde_json::Value>>,
        }
        let values = self
            .points
            .iter()
            .map(|p| {
                let mut map = serde_json::Map::new();
                map.insert(self.axis.clone(), json_number(p.axis_value));
                for (k, v) in &p.values {
                    map.insert(k.clone(), json_number(*v));
                }
                map
            })
            .collect();
        let summary = JsonSummary {
            name: &self.name,
            assertion: if self.passed() { "pass" } else { "fail" },
            axis: &self.axis,
            slope: self.slope,
            checks: &self.checks,
            notes: &self.notes,
            values,
        };
        Ok(serde_json::to_string_pretty(&summary)?)
    }
}

fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}
