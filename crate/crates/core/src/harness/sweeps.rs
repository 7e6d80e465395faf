use rayon::prelude::*;

use super::{
    default_test_size, hoeffding_bound, log_log_slope, mce_bound, run_trial, MetricBins, ScoreSource,
    Summary, SweepPoint, SweepReport, TrialReport, TrialSetup,
};
use crate::binning::fit_histogram;
use crate::error::{invalid, Result};
use crate::metrics::BinScheme;
use crate::seed;
use crate::synth::OracleSpec;

fn run_point(
    source: &dyn ScoreSource,
    setup: &TrialSetup,
    trials: usize,
    point_seed: u64,
) -> Result<Vec<TrialReport>> {
    (0..trials)
        .into_par_iter()
        .map(|t| run_trial(source, setup, t, seed::derive(point_seed, t as u64)))
        .collect()
}

fn summarize<F: Fn(&TrialReport) -> Option<f64>>(trials: &[TrialReport], field: F) -> Option<Summary> {
    let values: Vec<f64> = trials.iter().filter_map(field).collect();
    Summary::of(&values)
}

fn require_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return Err(invalid(format!("need at least {min} trials, got {trials}")));
    }
    Ok(())
}

fn require_bins(bins: usize, n: usize) -> Result<()> {
    if bins == 0 || bins > n {
        return Err(invalid(format!("bin count {bins} must lie in [1, {n}]")));
    }
    Ok(())
}

fn degenerate_note(report: &mut SweepReport, spec: &OracleSpec) {
    if spec.curve.is_degenerate() {
        report.notes.push(format!(
            "truth curve {} yields a single class; AUC is undefined and every bin is one-class",
            spec.curve
        ));
    }
}

/// Fraction of trials whose held-out MCE stays below `sqrt(2B ln(2B/delta)/N)`.
///
/// Asserts the fraction is at least `1 - delta`.
pub fn verify_mce_bound(
    spec: &OracleSpec,
    n: usize,
    bins: usize,
    delta: f64,
    trials: usize,
    test_size: Option<usize>,
    seed: u64,
) -> Result<SweepReport> {
    require_trials(trials, 50)?;
    require_bins(bins, n)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta {delta} must lie in (0, 1)")));
    }
    let setup = TrialSetup {
        n_cal: n,
        bins: Some(bins),
        test_size: test_size.unwrap_or_else(|| default_test_size(n)),
        metric: MetricBins::Layout,
        delta: Some(delta),
    };
    let results = run_point(spec, &setup, trials, seed::derive(seed, 0))?;
    let bound = mce_bound(bins, n, delta);
    let within = results.iter().filter(|t| t.mce <= bound).count() as f64 / trials as f64;

    let mut report = SweepReport::new("mce-bound", "N");
    let mut point = SweepPoint::new(n as f64);
    point.push("bins", bins as f64);
    point.push("delta", delta);
    point.push("bound", bound);
    point.push("fraction_within", within);
    point.push_summary("mce", summarize(&results, |t| Some(t.mce)));
    point.push_summary("ece", summarize(&results, |t| Some(t.ece)));
    report.points.push(point);
    report.check(
        "fraction_within_bound",
        within >= 1.0 - delta,
        format!("{within} of trials have MCE <= {bound}; required >= {}", 1.0 - delta),
    );
    degenerate_note(&mut report, spec);
    report.trials = results;
    Ok(report)
}

/// Mean held-out ECE across calibration-set sizes and its log-log slope.
///
/// Asserts the slope lies in `[-0.65, -0.35]`.
pub fn verify_ece_rate(
    spec: &OracleSpec,
    bins: usize,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SweepReport> {
    require_trials(trials, 1)?;
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    match (grid.first(), grid.last()) {
        (Some(&lo), Some(&hi)) if lo > 0 && hi >= 100 * lo => require_bins(bins, lo)?,
        _ => return Err(invalid("the N grid must span at least two decades")),
    }
    let mut report = SweepReport::new("ece-rate", "N");
    for (i, &n) in grid.iter().enumerate() {
        let setup = TrialSetup {
            n_cal: n,
            bins: Some(bins),
            test_size: default_test_size(n),
            metric: MetricBins::Layout,
            delta: None,
        };
        let results = run_point(spec, &setup, trials, seed::derive(seed, i as u64))?;
        let mut point = SweepPoint::new(n as f64);
        point.push("bins", bins as f64);
        point.push("test_size", setup.test_size as f64);
        point.push_summary("ece", summarize(&results, |t| Some(t.ece)));
        point.push_summary("mce", summarize(&results, |t| Some(t.mce)));
        point.push("rate_sqrt_b_over_n", (bins as f64 / n as f64).sqrt());
        report.points.push(point);
        report.trials.extend(results);
    }
    let xs: Vec<f64> = report.points.iter().map(|p| p.axis_value).collect();
    let ys: Vec<f64> = report.points.iter().map(|p| p.get("ece_mean").unwrap()).collect();
    report.slope = log_log_slope(&xs, &ys);
    match report.slope {
        Some(s) => report.check(
            "slope_in_range",
            (-0.65..=-0.35).contains(&s),
            format!("slope of ln mean ECE against ln N is {s}; required in [-0.65, -0.35]"),
        ),
        None => report.check("slope_in_range", false, "mean ECE is zero; slope undefined".into()),
    }
    degenerate_note(&mut report, spec);
    Ok(report)
}

/// Mean AUC loss of histogram binning for each bin count.
///
/// Asserts `mean loss <= 1/(2B) + 3 SE` for every `B` when the truth curve is
/// monotone; for other curves the loss is only reported.
pub fn verify_auc_loss(
    spec: &OracleSpec,
    n: usize,
    bins_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SweepReport> {
    require_trials(trials, 2)?;
    let mut grid = bins_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(invalid("the bin grid is empty"));
    }
    let max_bins = (n as f64).sqrt().floor() as usize;
    if let Some(&b) = grid.iter().find(|&&b| b == 0 || b > max_bins) {
        return Err(invalid(format!("bin count {b} must lie in [1, sqrt(N)] = [1, {max_bins}]")));
    }
    let mut report = SweepReport::new("auc-loss", "B");
    if n < 100_000 {
        report.notes.push(format!("N = {n} is below 1e5; sampling noise may be large relative to 1/B"));
    }
    let asserted = spec.curve.is_monotone() && !spec.curve.is_degenerate();
    if !asserted {
        report
            .notes
            .push(format!("truth curve {} is not monotone; the loss is reported, not asserted", spec.curve));
    }
    for (i, &b) in grid.iter().enumerate() {
        let setup = TrialSetup {
            n_cal: n,
            bins: Some(b),
            test_size: default_test_size(n),
            metric: MetricBins::Layout,
            delta: None,
        };
        let results = run_point(spec, &setup, trials, seed::derive(seed, i as u64))?;
        let loss = summarize(&results, |t| t.auc_loss);
        let half_inv = 1.0 / (2.0 * b as f64);
        let mut point = SweepPoint::new(b as f64);
        point.push("N", n as f64);
        point.push("half_inverse_b", half_inv);
        point.push_summary("auc_loss", loss);
        point.push("auc_raw_mean", summarize(&results, |t| t.auc_raw).map_or(f64::NAN, |s| s.mean));
        point.push(
            "auc_calibrated_mean",
            summarize(&results, |t| t.auc_calibrated).map_or(f64::NAN, |s| s.mean),
        );
        if asserted {
            let s = loss.expect("two-class oracle has an AUC");
            let limit = half_inv + 3.0 * s.se;
            report.check(
                &format!("loss_b{b}"),
                s.mean <= limit,
                format!("B = {b}: mean loss {} vs 1/(2B) + 3 SE = {limit}", s.mean),
            );
        }
        report.points.push(point);
        report.trials.extend(results);
    }
    degenerate_note(&mut report, spec);
    Ok(report)
}

/// Empirical `P(|theta_hat_i - theta_i| >= eps)` over trials and bins against
/// the Hoeffding bound `2 exp(-2 N eps^2 / B)`.
///
/// Also checks that the per-bin mean of `theta_hat_i - theta_i` is within three
/// standard errors of zero.
pub fn verify_theta_concentration(
    spec: &OracleSpec,
    n: usize,
    bins: usize,
    eps_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<SweepReport> {
    require_trials(trials, 50)?;
    require_bins(bins, n)?;
    let mut grid = eps_grid.to_vec();
    if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(invalid("epsilon values must be positive and finite"));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let point_seed = seed::derive(seed, 0);
    // signed deviations theta_hat_i - theta_i per trial
    let deviations: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let mut rng = seed::rng(seed::derive(point_seed, t as u64));
            let cal = spec.generate_with(n, &mut rng);
            let layout = fit_histogram(&cal, Some(bins), BinScheme::EqualFrequency)?;
            let theta = spec.true_theta(&layout);
            Ok((0..layout.num_bins())
                .filter_map(|j| layout.theta_hat(j).map(|h| h - theta[j]))
                .collect())
        })
        .collect::<Result<_>>()?;

    let total: usize = deviations.iter().map(Vec::len).sum();
    let mut report = SweepReport::new("theta-conc", "epsilon");
    for &eps in &grid {
        let exceed = deviations.iter().flatten().filter(|d| d.abs() >= eps).count();
        let freq = exceed as f64 / total as f64;
        let bound = hoeffding_bound(n, bins, eps);
        let mut point = SweepPoint::new(eps);
        point.push("N", n as f64);
        point.push("bins", bins as f64);
        point.push("bound", bound);
        point.push("exceedance", freq);
        point.push("exceed_count", exceed as f64);
        point.push("total", total as f64);
        report.points.push(point);
        report.check(
            &format!("hoeffding_eps{eps}"),
            freq <= bound,
            format!("eps = {eps}: empirical {freq} vs bound {bound}"),
        );
    }

    if deviations.iter().all(|d| d.len() == bins) {
        let worst = (0..bins)
            .map(|j| {
                let col: Vec<f64> = deviations.iter().map(|d| d[j]).collect();
                let s = Summary::of(&col).expect("trials > 0");
                if s.se > 0.0 {
                    s.mean.abs() / s.se
                } else if s.mean == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        report.check(
            "theta_mean_within_3se",
            worst <= 3.0,
            format!("largest per-bin |mean deviation| is {worst} standard errors"),
        );
    } else {
        report.notes.push("tied scores merged bins in some trials; per-bin mean check skipped".into());
    }
    degenerate_note(&mut report, spec);
    Ok(report)
}

/// Whether `means` is non-increasing, allowing one adjacent increase no larger
/// than the standard error of the difference.
fn non_increasing(means: &[f64], ses: &[f64]) -> (bool, String) {
    let rises: Vec<(usize, f64, f64)> = means
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0])
        .map(|(i, w)| (i, w[1] - w[0], ses[i].hypot(ses[i + 1])))
        .collect();
    let ok = match rises.as_slice() {
        [] => true,
        [(_, rise, se)] => rise <= se,
        _ => false,
    };
    let detail = if rises.is_empty() {
        "no increases".to_string()
    } else {
        rises
            .iter()
            .map(|(i, rise, se)| format!("increase of {rise} after point {i} (SE {se})"))
            .collect::<Vec<_>>()
            .join("; ")
    };
    (ok, detail)
}

/// Histogram binning with the default bin count at growing calibration-set sizes,
/// measured with an equal-frequency reliability diagram of `metric_bins` bins.
///
/// Asserts mean MCE and ECE do not increase with size (one increase within
/// one standard error allowed).
pub fn calibration_size_sweep(
    source: &dyn ScoreSource,
    sizes: &[usize],
    trials: usize,
    test_size: Option<usize>,
    metric_bins: usize,
    seed: u64,
) -> Result<SweepReport> {
    require_trials(trials, 1)?;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(invalid("sizes must be positive and strictly ascending"));
    }
    if metric_bins == 0 {
        return Err(invalid("metric bin count must be at least 1"));
    }
    let test_size = test_size.unwrap_or_else(|| default_test_size(*sizes.last().unwrap()));
    let mut report = SweepReport::new("size-sweep", "calibration_size");
    report.notes.push(format!("source: {}", source.describe()));
    for (i, &n) in sizes.iter().enumerate() {
        let setup = TrialSetup {
            n_cal: n,
            bins: None,
            test_size,
            metric: MetricBins::Reliability(metric_bins),
            delta: None,
        };
        let results = run_point(source, &setup, trials, seed::derive(seed, i as u64))?;
        let mut point = SweepPoint::new(n as f64);
        point.push("bins", results[0].bins as f64);
        point.push_summary("mce", summarize(&results, |t| Some(t.mce)));
        point.push_summary("ece", summarize(&results, |t| Some(t.ece)));
        point.push_summary("auc", summarize(&results, |t| t.auc_calibrated));
        point.push("auc_raw_mean", summarize(&results, |t| t.auc_raw).map_or(f64::NAN, |s| s.mean));
        report.points.push(point);
        report.trials.extend(results);
    }
    for metric in ["mce", "ece"] {
        let means: Vec<f64> = report.points.iter().map(|p| p.get(&format!("{metric}_mean")).unwrap()).collect();
        let ses: Vec<f64> = report.points.iter().map(|p| p.get(&format!("{metric}_se")).unwrap()).collect();
        let (ok, detail) = non_increasing(&means, &ses);
        report.check(&format!("{metric}_non_increasing"), ok, detail);
    }
    Ok(report)
}
