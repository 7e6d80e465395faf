//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};

use calibkit::data::{load_scored_csv, write_feature_csv, write_scored_csv};
use calibkit::harness::{self, ScoreSource, ScoredXor, SweepReport};
use calibkit::metrics::{auc, ReliabilityReport};
use calibkit::model::{CalibrationModel, FitOptions};
use calibkit::synth::{fit_logistic, generate_oracle, generate_xor, FeatureMap, LogisticConfig, OracleSpec};
use calibkit::{seed, Error};

use crate::{ApplyArgs, EvalArgs, FitArgs, SimulateCommand, VerifyCommand, VerifyOutput};

pub enum Outcome {
    Ok,
    AssertionFailed,
}

type CmdResult = anyhow::Result<Outcome>;

/// 3 for failures of a fitting procedure, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let fit_failure = err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<Error>(),
            Some(
                Error::OneClass { .. }
                    | Error::TooFewSamples { .. }
                    | Error::Fold { .. }
                    | Error::NonFiniteElbo { .. }
            )
        )
    });
    if fit_failure {
        3
    } else {
        2
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<CalibrationModel> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    CalibrationModel::from_json(&text).with_context(|| format!("invalid model file {}", path.display()))
}

pub fn fit(args: FitArgs) -> CmdResult {
    let data = load_scored_csv(&args.input, &args.columns.score_column, &args.columns.label_column)?;
    let mut options = FitOptions {
        bins: args.bins,
        seed: args.seed,
        kde_form: args.kde_form,
        ..FitOptions::default()
    };
    options.dpm.truncation = args.truncation;
    options.dpm.alpha = args.alpha;
    if let Some(it) = args.max_iter {
        options.platt_max_iter = it;
        options.dpm.max_iter = it;
    }
    let model = CalibrationModel::fit(args.method, &data, &options)
        .with_context(|| format!("fitting {} failed", args.method))?;
    write_text(&args.out, &model.to_json()?)?;
    println!(
        "method={} N={} m={} n={}",
        args.method,
        data.len(),
        data.positives(),
        data.negatives()
    );
    println!("{}", model.summary());
    Ok(Outcome::Ok)
}

pub fn apply(args: ApplyArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    let mut reader = csv::Reader::from_path(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let mut headers = reader.headers()?.clone();
    let Some(col) = headers.iter().position(|h| h.trim() == args.score_column) else {
        return Err(Error::MissingColumn(args.score_column).into());
    };
    if headers.iter().any(|h| h == "calibrated") {
        bail!("{} already has a `calibrated` column", args.input.display());
    }
    headers.push_field("calibrated");
    let mut writer = csv::Writer::from_writer(create(&args.out)?);
    writer.write_record(&headers)?;
    for (i, record) in reader.records().enumerate() {
        let mut record = record?;
        let cell = record.get(col).unwrap_or("").trim();
        let score: f64 = cell.parse().map_err(|_| Error::Row {
            row: i + 1,
            message: format!("cannot parse score `{cell}`"),
        })?;
        let value = model.apply(score).map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        record.push_field(&value.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(Outcome::Ok)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let raw = load_scored_csv(&args.input, &args.columns.score_column, &args.columns.label_column)?;
    let predictions = match &args.model {
        Some(path) => load_model(path)?.calibrate(&raw)?,
        None => raw.clone(),
    };
    let report = ReliabilityReport::evaluate(predictions.samples(), args.bins, args.scheme)?;
    println!("{:<9}{}", "RMSE", report.rmse);
    println!("{:<9}{}", "AUC", fmt_opt(report.auc));
    println!("{:<9}{}", "ACC", report.accuracy);
    println!("{:<9}{}", "MCE", report.mce);
    println!("{:<9}{}", "ECE", report.ece);
    if args.model.is_some() {
        let raw_auc = auc(raw.samples()).ok();
        println!("{:<9}{}", "AUC_RAW", fmt_opt(raw_auc));
        println!("{:<9}{}", "AUC_LOSS", fmt_opt(raw_auc.zip(report.auc).map(|(r, c)| r - c)));
    }
    if let Some(path) = &args.bins_out {
        report.write_bins_csv(create(path)?)?;
    }
    Ok(Outcome::Ok)
}

pub fn simulate(command: SimulateCommand) -> CmdResult {
    match command {
        SimulateCommand::Xor { n, noise_sd, seed, out } => {
            let data = generate_xor(n, noise_sd, seed)?;
            write_feature_csv(&data, create(&out)?)?;
            println!("wrote {n} XOR rows to {}", out.display());
        }
        SimulateCommand::Oracle { curve, n, seed, out } => {
            if n == 0 {
                bail!(Error::Empty);
            }
            let data = generate_oracle(&OracleSpec::new(curve), n, seed);
            write_scored_csv(&data, create(&out)?)?;
            println!("wrote {n} scores from the {curve} curve to {}", out.display());
        }
        SimulateCommand::Scored {
            feature_map,
            train_n,
            test_n,
            noise_sd,
            l2,
            seed,
            train_out,
            test_out,
        } => {
            let train = generate_xor(train_n, noise_sd, seed::derive(seed, 0))?;
            let test = generate_xor(test_n, noise_sd, seed::derive(seed, 1))?;
            let config = LogisticConfig {
                l2,
                ..LogisticConfig::new(feature_map)
            };
            let model = fit_logistic(&train, &config).context("fitting the base learner failed")?;
            let (train_scored, test_scored) = (train.score_with(&model)?, test.score_with(&model)?);
            write_scored_csv(&train_scored, create(&train_out)?)?;
            write_scored_csv(&test_scored, create(&test_out)?)?;
            println!(
                "{feature_map} logistic: weights {:?}, train AUC {}, test AUC {}",
                model.weights,
                fmt_opt(auc(train_scored.samples()).ok()),
                fmt_opt(auc(test_scored.samples()).ok())
            );
        }
    }
    Ok(Outcome::Ok)
}

fn finish(report: SweepReport, output: &VerifyOutput) -> CmdResult {
    fs::create_dir_all(&output.out_dir)
        .with_context(|| format!("cannot create {}", output.out_dir.display()))?;
    let base = output.out_dir.join(&report.name);
    report.write_csv(create(&base.with_extension("csv"))?)?;
    report.write_trials_csv(create(&output.out_dir.join(format!("{}_trials.csv", report.name)))?)?;
    write_text(&base.with_extension("json"), &report.summary_json()?)?;

    for p in &report.points {
        let cols: Vec<String> = p.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{}={} {}", report.axis, p.axis_value, cols.join(" "));
    }
    if let Some(slope) = report.slope {
        println!("slope={slope}");
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("assertion: {}", if report.passed() { "pass" } else { "fail" });
    Ok(if report.passed() {
        Outcome::Ok
    } else {
        Outcome::AssertionFailed
    })
}

fn xor_source(map: FeatureMap, train_n: usize, noise_sd: f64, seed: u64) -> anyhow::Result<ScoredXor> {
    let train = generate_xor(train_n, noise_sd, seed::derive(seed, u64::MAX))?;
    let model = fit_logistic(&train, &LogisticConfig::new(map)).context("fitting the base learner failed")?;
    Ok(ScoredXor { model, noise_sd })
}

pub fn verify(command: VerifyCommand) -> CmdResult {
    match command {
        VerifyCommand::MceBound {
            curve,
            n,
            bins,
            delta,
            trials,
            test_size,
            output,
        } => {
            let spec = OracleSpec::new(curve);
            println!("bound={:.4}", harness::mce_bound(bins, n, delta));
            let report = harness::verify_mce_bound(&spec, n, bins, delta, trials, test_size, output.seed)?;
            finish(report, &output)
        }
        VerifyCommand::EceRate {
            curve,
            bins,
            n_grid,
            trials,
            output,
        } => {
            let report = harness::verify_ece_rate(&OracleSpec::new(curve), bins, &n_grid, trials, output.seed)?;
            finish(report, &output)
        }
        VerifyCommand::AucLoss {
            curve,
            n,
            bins_grid,
            trials,
            output,
        } => {
            let report = harness::verify_auc_loss(&OracleSpec::new(curve), n, &bins_grid, trials, output.seed)?;
            finish(report, &output)
        }
        VerifyCommand::ThetaConc {
            curve,
            n,
            bins,
            epsilon,
            trials,
            output,
        } => {
            let report =
                harness::verify_theta_concentration(&OracleSpec::new(curve), n, bins, &epsilon, trials, output.seed)?;
            finish(report, &output)
        }
        VerifyCommand::SizeSweep {
            source,
            curve,
            sizes,
            trials,
            metric_bins,
            test_size,
            train_n,
            noise_sd,
            output,
        } => {
            let oracle;
            let xor;
            let src: &dyn ScoreSource = match source.as_str() {
                "oracle" => {
                    oracle = OracleSpec::new(curve);
                    &oracle
                }
                "xor-linear" | "xor-quadratic" => {
                    let map = if source == "xor-linear" {
                        FeatureMap::Linear
                    } else {
                        FeatureMap::Quadratic
                    };
                    xor = xor_source(map, train_n, noise_sd, output.seed)?;
                    &xor
                }
                other => return Err(Error::InvalidArgument(format!("unknown source `{other}`")).into()),
            };
            let report = harness::calibration_size_sweep(src, &sizes, trials, test_size, metric_bins, output.seed)?;
            finish(report, &output)
        }
    }
}
