//! End-to-end acceptance checks. Runs as a plain binary (no libtest harness) so
//! every criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use calibkit::binning::{fit_histogram, plug_in_estimate};
use calibkit::density::fit_kde;
use calibkit::harness::{
    calibration_size_sweep, verify_auc_loss, verify_ece_rate, verify_mce_bound, verify_theta_concentration,
    ScoredXor,
};
use calibkit::metrics::{self, ReliabilityReport};
use calibkit::model::{CalibrationModel, FitOptions, Method};
use calibkit::monotone::fit_isotonic;
use calibkit::synth::{
    fit_logistic, generate_xor, FeatureMap, LogisticConfig, OracleSpec, TruthCurve, XOR_NOISE_SD,
};
use calibkit::{seed, BinScheme, Dataset};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_dataset(rng: &mut seed::Rng, n: usize) -> Dataset {
    let discrete = rng.random_bool(0.5);
    loop {
        let pairs: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let s = if discrete {
                    rng.random_range(0..=10) as f64 / 10.0
                } else {
                    rng.random()
                };
                (s, rng.random_bool(0.5))
            })
            .collect();
        let d = Dataset::from_pairs(pairs).unwrap();
        if d.positives() > 0 && d.negatives() > 0 {
            return d;
        }
    }
}

fn plug_in_identity() -> Outcome {
    let mut rng = seed::rng(101);
    let mut queries = 0;
    for case in 0..1000 {
        let n = rng.random_range(2..=50);
        let data = random_dataset(&mut rng, n);
        let bins = rng.random_range(1..=n);
        let scheme = if case % 2 == 0 {
            BinScheme::EqualFrequency
        } else {
            BinScheme::EqualWidth
        };
        let layout = fit_histogram(&data, Some(bins), scheme).map_err(|e| e.to_string())?;
        for i in 0..=100 {
            let q = i as f64 / 100.0;
            let direct = layout.apply(q).unwrap();
            let bayes = plug_in_estimate(&data, &layout, q).unwrap();
            ensure(direct.to_bits() == bayes.to_bits(), || {
                format!("case {case}, query {q}: histogram {direct} vs plug-in {bayes}")
            })?;
            queries += 1;
        }
    }
    Ok(format!("{queries} queries identical"))
}

/// Least-squares non-decreasing fit by enumerating every split of the sorted
/// points into contiguous blocks; tie groups are never split.
fn brute_isotonic(groups: &[Vec<f64>]) -> Vec<f64> {
    let k = groups.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (k - 1)) {
        let mut fit = Vec::with_capacity(k);
        let mut start = 0;
        for end in 1..=k {
            if end == k || mask & (1 << (end - 1)) != 0 {
                let block: Vec<f64> = groups[start..end].iter().flatten().copied().collect();
                let mean = block.iter().sum::<f64>() / block.len() as f64;
                fit.extend(std::iter::repeat_n(mean, end - start));
                start = end;
            }
        }
        if fit.windows(2).any(|w| w[0] > w[1] + 1e-15) {
            continue;
        }
        let sse: f64 = groups
            .iter()
            .zip(&fit)
            .flat_map(|(g, f)| g.iter().map(move |y| (y - f).powi(2)))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-12) {
            best = Some((sse, fit));
        }
    }
    best.unwrap().1
}

fn pav_oracle() -> Outcome {
    let mut datasets = 0;
    for n in 1..=8usize {
        // tie pattern: bit i set means points i and i+1 share a score
        for ties in 0u32..(1 << (n - 1)) {
            let mut scores = Vec::with_capacity(n);
            let mut level = 0;
            for i in 0..n {
                if i > 0 && ties & (1 << (i - 1)) == 0 {
                    level += 1;
                }
                scores.push(0.05 + 0.1 * level as f64);
            }
            for labels in 0u32..(1 << n) {
                let z: Vec<bool> = (0..n).map(|i| labels & (1 << i) != 0).collect();
                let data = Dataset::from_pairs(scores.iter().copied().zip(z.iter().copied())).unwrap();
                let model = fit_isotonic(&data).unwrap();
                let mut groups: Vec<Vec<f64>> = Vec::new();
                for i in 0..n {
                    let y = f64::from(u8::from(z[i]));
                    if i > 0 && scores[i] == scores[i - 1] {
                        groups.last_mut().unwrap().push(y);
                    } else {
                        groups.push(vec![y]);
                    }
                }
                let expected = brute_isotonic(&groups);
                let distinct: Vec<f64> = {
                    let mut s = scores.clone();
                    s.dedup();
                    s
                };
                for (s, e) in distinct.iter().zip(&expected) {
                    let got = model.apply(*s).unwrap();
                    ensure((got - e).abs() <= 1e-9, || {
                        format!("scores {scores:?} labels {z:?}: fit {got} at {s}, exhaustive {e}")
                    })?;
                }
                datasets += 1;
            }
        }
    }
    Ok(format!("{datasets} datasets match exhaustive search"))
}

fn auc_oracle() -> Outcome {
    let mut rng = seed::rng(303);
    for case in 0..500 {
        let n = rng.random_range(2..=200);
        let data = random_dataset(&mut rng, n);
        let s = data.samples();
        let mut wins = 0.0;
        let (mut m, mut k) = (0.0, 0.0);
        for a in s.iter().filter(|x| x.label()) {
            m += 1.0;
            for b in s.iter().filter(|x| !x.label()) {
                if a.score() > b.score() {
                    wins += 1.0;
                } else if a.score() == b.score() {
                    wins += 0.5;
                }
            }
        }
        k += data.negatives() as f64;
        let brute = wins / (m * k);
        let fast = metrics::auc(s).unwrap();
        ensure((fast - brute).abs() <= 1e-12, || format!("case {case}: {fast} vs {brute}"))?;
    }
    Ok("500 datasets agree".into())
}

fn nadaraya_watson() -> Outcome {
    let mut rng = seed::rng(404);
    let mut checked = 0;
    for case in 0..300 {
        let n = rng.random_range(4..=120);
        let mut data = random_dataset(&mut rng, n);
        while data.positives() < 2 || data.negatives() < 2 {
            data = random_dataset(&mut rng, n);
        }
        let model = fit_kde(&data, true).map_err(|e| e.to_string())?;
        let h = model.h0;
        ensure(model.h1 == h, || format!("case {case}: bandwidths differ"))?;
        for _ in 0..50 {
            let x: f64 = rng.random();
            let (mut num, mut den) = (0.0, 0.0);
            for s in data.samples() {
                if (x - s.score()).abs() <= h {
                    den += 1.0;
                    num += s.target();
                }
            }
            if den == 0.0 {
                continue;
            }
            let got = model.apply(x).unwrap();
            ensure((got - num / den).abs() <= 1e-12, || {
                format!("case {case}, x = {x}: kde {got} vs Nadaraya-Watson {}", num / den)
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} queries agree"))
}

fn identity() -> OracleSpec {
    OracleSpec::new(TruthCurve::Identity)
}

fn report_failure(r: &calibkit::harness::SweepReport) -> String {
    r.checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

fn mce_bound() -> Outcome {
    let r = verify_mce_bound(&identity(), 1000, 10, 0.05, 200, Some(100_000), 5).map_err(|e| e.to_string())?;
    let p = &r.points[0];
    let bound = p.get("bound").unwrap();
    ensure((bound - 0.3462).abs() < 5e-5, || format!("bound {bound}"))?;
    ensure(r.passed(), || report_failure(&r))?;
    Ok(format!(
        "bound {bound:.4}, fraction within {}, mean MCE {:.4}",
        p.get("fraction_within").unwrap(),
        p.get("mce_mean").unwrap()
    ))
}

fn ece_rate() -> Outcome {
    let r = verify_ece_rate(&identity(), 10, &[1000, 10_000, 100_000], 50, 6).map_err(|e| e.to_string())?;
    ensure(r.passed(), || report_failure(&r))?;
    Ok(format!("slope {:.4}", r.slope.unwrap()))
}

fn auc_loss() -> Outcome {
    let r = verify_auc_loss(&identity(), 100_000, &[5, 10, 20, 50], 20, 7).map_err(|e| e.to_string())?;
    ensure(r.checks.len() == 4, || "expected one check per B".into())?;
    ensure(r.passed(), || report_failure(&r))?;
    let losses: Vec<String> = r
        .points
        .iter()
        .map(|p| format!("B={}: {:.5}", p.axis_value, p.get("auc_loss_mean").unwrap()))
        .collect();
    Ok(losses.join(", "))
}

fn hoeffding() -> Outcome {
    let eps = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08];
    let r = verify_theta_concentration(&identity(), 10_000, 10, &eps, 500, 8).map_err(|e| e.to_string())?;
    let failed: Vec<_> = r.checks.iter().filter(|c| c.name.starts_with("hoeffding") && !c.passed).collect();
    ensure(failed.is_empty(), || report_failure(&r))?;
    let at = r.points.iter().find(|p| p.axis_value == 0.05).unwrap();
    Ok(format!(
        "eps=0.05: empirical {} vs bound {:.5}",
        at.get("exceedance").unwrap(),
        at.get("bound").unwrap()
    ))
}

struct Pipeline {
    train: Dataset,
    test: Dataset,
}

fn pipeline(map: FeatureMap) -> Pipeline {
    let train = generate_xor(1000, XOR_NOISE_SD, 1).unwrap();
    let test = generate_xor(1000, XOR_NOISE_SD, 2).unwrap();
    let model = fit_logistic(&train, &LogisticConfig::new(map)).unwrap();
    Pipeline {
        train: train.score_with(&model).unwrap(),
        test: test.score_with(&model).unwrap(),
    }
}

fn calibrated_report(p: &Pipeline, method: Method) -> ReliabilityReport {
    let model = CalibrationModel::fit(method, &p.train, &FitOptions::default()).unwrap();
    let out = model.calibrate(&p.test).unwrap();
    ReliabilityReport::evaluate(out.samples(), 10, BinScheme::EqualFrequency).unwrap()
}

fn table_linear() -> Outcome {
    let p = pipeline(FeatureMap::Linear);
    let base = metrics::auc(p.test.samples()).unwrap();
    ensure((0.45..=0.60).contains(&base), || format!("base AUC {base}"))?;
    let mut summary = vec![format!("base AUC {base:.3}")];
    for method in [Method::Histogram, Method::Kde, Method::Dpm] {
        let r = calibrated_report(&p, method);
        let auc = r.auc.unwrap();
        ensure(auc >= 0.80, || format!("{method}: AUC {auc}"))?;
        if method != Method::Dpm {
            ensure(r.mce <= 0.25 && r.ece <= 0.10, || format!("{method}: MCE {} ECE {}", r.mce, r.ece))?;
        }
        summary.push(format!("{method} AUC {auc:.3} MCE {:.3} ECE {:.3}", r.mce, r.ece));
    }
    let platt = calibrated_report(&p, Method::Platt).auc.unwrap();
    ensure((platt - base).abs() <= 0.02, || format!("platt AUC {platt} vs base {base}"))?;
    summary.push(format!("platt AUC {platt:.3}"));
    Ok(summary.join("; "))
}

fn table_quadratic() -> Outcome {
    let p = pipeline(FeatureMap::Quadratic);
    let base = metrics::auc(p.test.samples()).unwrap();
    ensure(base >= 0.97, || format!("base AUC {base}"))?;
    let mut worst_drop: f64 = 0.0;
    let mut worst_ece: f64 = 0.0;
    for method in Method::ALL {
        let r = calibrated_report(&p, method);
        let drop = base - r.auc.unwrap();
        ensure(drop <= 0.02, || format!("{method}: AUC drop {drop}"))?;
        ensure(r.ece <= 0.05, || format!("{method}: ECE {}", r.ece))?;
        worst_drop = worst_drop.max(drop);
        worst_ece = worst_ece.max(r.ece);
    }
    Ok(format!(
        "base AUC {base:.4}; worst AUC drop {worst_drop:.4}, worst ECE {worst_ece:.4} over {} calibrators",
        Method::ALL.len()
    ))
}

fn size_sweep() -> Outcome {
    let train = generate_xor(1000, XOR_NOISE_SD, 1).unwrap();
    let model = fit_logistic(&train, &LogisticConfig::new(FeatureMap::Linear)).unwrap();
    let source = ScoredXor {
        model,
        noise_sd: XOR_NOISE_SD,
    };
    let r = calibration_size_sweep(&source, &[100, 1000, 10_000], 10, None, 10, 11).map_err(|e| e.to_string())?;
    ensure(r.passed(), || report_failure(&r))?;
    let mce: Vec<f64> = r.points.iter().map(|p| p.get("mce_mean").unwrap()).collect();
    let ece: Vec<f64> = r.points.iter().map(|p| p.get("ece_mean").unwrap()).collect();
    ensure(mce[2] <= 0.5 * mce[0], || format!("MCE {mce:?} does not halve"))?;
    Ok(format!(
        "MCE {:.3}/{:.3}/{:.3}, ECE {:.3}/{:.3}/{:.3}",
        mce[0], mce[1], mce[2], ece[0], ece[1], ece[2]
    ))
}

const COMMANDS: &[&[&str]] = &[
    &["simulate", "xor", "--n", "400", "--seed", "3", "--out", "xor.csv"],
    &["simulate", "oracle", "--curve", "logistic-warp", "--n", "600", "--seed", "4", "--out", "oracle.csv"],
    &["simulate", "scored", "--seed", "5", "--train-out", "train.csv", "--test-out", "test.csv"],
    &["fit", "--method", "histogram", "--in", "train.csv", "--out", "histogram.json"],
    &["fit", "--method", "histogram-width", "--in", "train.csv", "--out", "histogram-width.json"],
    &["fit", "--method", "platt", "--in", "train.csv", "--out", "platt.json"],
    &["fit", "--method", "isotonic", "--in", "train.csv", "--out", "isotonic.json"],
    &["fit", "--method", "kde", "--in", "train.csv", "--out", "kde.json"],
    &["fit", "--method", "kde-shared", "--in", "train.csv", "--out", "kde-shared.json"],
    &["fit", "--method", "dpm", "--in", "train.csv", "--out", "dpm.json", "--seed", "9"],
    &["apply", "--model", "dpm.json", "--in", "test.csv", "--out", "applied.csv"],
    &["eval", "--in", "test.csv", "--model", "kde.json", "--bins-out", "bins.csv"],
    &["eval", "--in", "applied.csv", "--score-column", "calibrated", "--scheme", "equal-width"],
    &["verify", "mce-bound", "--trials", "50", "--test-size", "20000", "--seed", "1", "--out-dir", "v"],
    &["verify", "ece-rate", "--n-grid", "100,1000,10000", "--trials", "5", "--seed", "2", "--out-dir", "v"],
    &["verify", "auc-loss", "--n", "10000", "--bins-grid", "5,10", "--trials", "4", "--seed", "3", "--out-dir", "v"],
    &["verify", "theta-conc", "--n", "2000", "--trials", "60", "--seed", "4", "--out-dir", "v"],
    &["verify", "size-sweep", "--sizes", "100,1000", "--trials", "3", "--test-size", "20000", "--seed", "5", "--out-dir", "v"],
];

fn run_all(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut outputs = BTreeMap::new();
    for (i, args) in COMMANDS.iter().enumerate() {
        let out = Command::new(env!("CARGO_BIN_EXE_calibkit"))
            .args(*args)
            .current_dir(dir)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.code() == Some(0), || {
            format!("`{}` exited with {:?}: {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr))
        })?;
        outputs.insert(format!("stdout {i:02}"), out.stdout);
    }
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(dir).unwrap().display().to_string();
                outputs.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(outputs)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_all(a.path())?;
    let second = run_all(b.path())?;
    ensure(first.keys().eq(second.keys()), || "different sets of output files".into())?;
    for (name, bytes) in &first {
        ensure(second[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} commands, {} outputs byte-identical", COMMANDS.len(), first.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("plug-in identity", plug_in_identity),
        ("isotonic vs exhaustive search", pav_oracle),
        ("AUC vs pair enumeration", auc_oracle),
        ("shared-bandwidth KDE equals Nadaraya-Watson", nadaraya_watson),
        ("MCE bound holds in >= 95% of trials", mce_bound),
        ("ECE rate slope in [-0.65, -0.35]", ece_rate),
        ("AUC loss within 1/(2B) + 3 SE", auc_loss),
        ("Hoeffding concentration of bin estimates", hoeffding),
        ("XOR linear learner: calibration recovers AUC", table_linear),
        ("XOR quadratic learner: calibration keeps AUC", table_quadratic),
        ("calibration-set size sweep", size_sweep),
        ("byte-identical reruns", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL [{:>2}] {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
