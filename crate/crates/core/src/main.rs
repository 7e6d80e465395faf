use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use calibkit::density::KdeForm;
use calibkit::metrics::DEFAULT_BINS;
use calibkit::model::Method;
use calibkit::synth::{FeatureMap, TruthCurve, XOR_NOISE_SD};
use calibkit::BinScheme;

mod cmd;

#[derive(Parser)]
#[command(name = "calibkit", version, about = "Probability calibration for binary classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a calibrator on a scored CSV and write it as JSON.
    Fit(FitArgs),
    /// Append a `calibrated` column to a scored CSV.
    Apply(ApplyArgs),
    /// Print RMSE, AUC, ACC, MCE and ECE and optionally write the reliability bins.
    Eval(EvalArgs),
    /// Generate synthetic datasets.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Monte-Carlo checks of histogram binning guarantees.
    #[command(subcommand)]
    Verify(VerifyCommand),
}

#[derive(Args)]
struct Columns {
    #[arg(long, default_value = "score")]
    score_column: String,
    #[arg(long, default_value = "label")]
    label_column: String,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    columns: Columns,
    /// Histogram bins [default: round(N^(1/3))].
    #[arg(long)]
    bins: Option<usize>,
    /// KDE closed form: `bayes`, or `printed` for the variant with class-count prefactors.
    #[arg(long, default_value = "bayes", value_parser = parse_kde_form)]
    kde_form: KdeForm,
    /// DPM truncation level.
    #[arg(long, default_value_t = 20)]
    truncation: usize,
    /// DPM stick-breaking concentration.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Iteration budget for Platt (default 100) or DPM (default 500).
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "score")]
    score_column: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Calibrate the scores with this model first; the raw AUC and the AUC loss are then also reported.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    columns: Columns,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value = "equal-frequency", value_parser = parse_scheme)]
    scheme: BinScheme,
    /// Write the reliability bins here as CSV.
    #[arg(long)]
    bins_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Four Gaussian blobs with XOR labels, as a feature CSV.
    Xor {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = XOR_NOISE_SD)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform scores with labels from a known truth curve.
    Oracle {
        #[arg(long, default_value = "identity", value_parser = parse_curve)]
        curve: TruthCurve,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// XOR train/test sets scored by a logistic model fitted on the training set.
    Scored {
        #[arg(long, default_value = "linear", value_parser = parse_feature_map)]
        feature_map: FeatureMap,
        #[arg(long, default_value_t = 1000)]
        train_n: usize,
        #[arg(long, default_value_t = 1000)]
        test_n: usize,
        #[arg(long, default_value_t = XOR_NOISE_SD)]
        noise_sd: f64,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
}

#[derive(Args)]
struct VerifyOutput {
    /// Directory for `<check>.csv`, `<check>_trials.csv` and `<check>.json`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Fraction of trials with MCE below sqrt(2B ln(2B/delta)/N).
    MceBound {
        #[arg(long, default_value = "identity", value_parser = parse_curve)]
        curve: TruthCurve,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Held-out sample size [default: max(10 N, 100000)].
        #[arg(long)]
        test_size: Option<usize>,
        #[command(flatten)]
        output: VerifyOutput,
    },
    /// Log-log slope of mean ECE against N.
    EceRate {
        #[arg(long, default_value = "identity", value_parser = parse_curve)]
        curve: TruthCurve,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[command(flatten)]
        output: VerifyOutput,
    },
    /// Mean AUC loss against 1/(2B).
    AucLoss {
        #[arg(long, default_value = "identity", value_parser = parse_curve)]
        curve: TruthCurve,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,50")]
        bins_grid: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[command(flatten)]
        output: VerifyOutput,
    },
    /// Exceedance of |theta_hat - theta| >= eps against the Hoeffding bound.
    ThetaConc {
        #[arg(long, default_value = "identity", value_parser = parse_curve)]
        curve: TruthCurve,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.03,0.05,0.08")]
        epsilon: Vec<f64>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[command(flatten)]
        output: VerifyOutput,
    },
    /// Calibration error of histogram binning at growing calibration-set sizes.
    SizeSweep {
        /// `oracle`, or `xor-linear` / `xor-quadratic` for XOR scores from a logistic model.
        #[arg(long, default_value = "xor-linear")]
        source: String,
        #[arg(long, default_value = "identity", value_parser = parse_curve)]
        curve: TruthCurve,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        metric_bins: usize,
        /// Held-out sample size [default: max(10 * largest size, 100000)].
        #[arg(long)]
        test_size: Option<usize>,
        /// Training rows for the logistic model of the XOR sources.
        #[arg(long, default_value_t = 1000)]
        train_n: usize,
        #[arg(long, default_value_t = XOR_NOISE_SD)]
        noise_sd: f64,
        #[command(flatten)]
        output: VerifyOutput,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: calibkit::Error| e.to_string())
}

fn parse_curve(s: &str) -> Result<TruthCurve, String> {
    s.parse().map_err(|e: calibkit::Error| e.to_string())
}

fn parse_feature_map(s: &str) -> Result<FeatureMap, String> {
    s.parse().map_err(|e: calibkit::Error| e.to_string())
}

fn parse_kde_form(s: &str) -> Result<KdeForm, String> {
    match s {
        "bayes" => Ok(KdeForm::Bayes),
        "printed" => Ok(KdeForm::Printed),
        other => Err(format!("unknown KDE form `{other}`")),
    }
}

fn parse_scheme(s: &str) -> Result<BinScheme, String> {
    match s {
        "equal-frequency" => Ok(BinScheme::EqualFrequency),
        "equal-width" => Ok(BinScheme::EqualWidth),
        other => Err(format!("unknown bin scheme `{other}`")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd::fit(args),
        Command::Apply(args) => cmd::apply(args),
        Command::Eval(args) => cmd::eval(args),
        Command::Simulate(sim) => cmd::simulate(sim),
        Command::Verify(v) => cmd::verify(v),
    };
    match result {
        Ok(cmd::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(cmd::Outcome::AssertionFailed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(cmd::exit_code(&err))
        }
    }
}
