use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;

/// Variance-free tuning of sparse linear regression estimators.
#[derive(Debug, Parser)]
#[command(name = "sparsetune", version, about)]
struct Cli {
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
struct DataArgs {
    /// Design CSV, one observation per row.
    #[arg(long)]
    data: PathBuf,
    /// The CSV files start with a header row.
    #[arg(long)]
    header: bool,
    /// Response column inside the data CSV (index or header name).
    #[arg(long, conflicts_with = "response_file")]
    response_col: Option<String>,
    /// Single-column CSV holding the response.
    #[arg(long)]
    response_file: Option<PathBuf>,
    /// Rescale columns to unit norm before fitting; coefficients are reported
    /// in the original coordinates.
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
struct GridArgs {
    /// Number of points of the default log-spaced grid.
    #[arg(long, default_value_t = sparsetune_core::estimators::DEFAULT_GRID_LEN)]
    grid_len: usize,
    /// Smallest grid value as a fraction of the null threshold.
    #[arg(long, default_value_t = sparsetune_core::estimators::DEFAULT_GRID_RATIO)]
    grid_ratio: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct OutArgs {
    /// Write the JSON artifact here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Estimator {
    Lasso,
    GaussLasso,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Collection {
    /// One space per distinct path support.
    Coordinate,
    /// Every subset up to the size bound (p <= 12).
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BicRule {
    ModifiedBic,
    PluginAic,
    PluginBic,
    PluginBm,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SlopeShape {
    /// Penalty proportional to the dimension.
    Dim,
    /// Birge-Massart shape `4d (4 + ln(p/d))`.
    Bm,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum OracleMethod {
    Bm,
    Lb,
    Bgh,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum SegMethod {
    #[value(name = "bgh")]
    #[serde(rename = "bgh")]
    Bgh,
    #[value(name = "lebarbier")]
    #[serde(rename = "lebarbier")]
    Lebarbier,
    #[value(name = "slope")]
    #[serde(rename = "slope")]
    Slope,
    #[value(name = "tv+linselect")]
    #[serde(rename = "tv+linselect")]
    TvLinselect,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum Experiment {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    #[value(name = "bic-demo")]
    #[serde(rename = "bic-demo")]
    BicDemo,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lasso at one penalty level, or its whole path when no level is given.
    FitLasso {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Square-root Lasso (default level `2 sqrt(2 ln p)`).
    FitSqrtLasso {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Group Lasso with one level per group.
    FitGroupLasso {
        #[command(flatten)]
        data: DataArgs,
        /// Group label of each column, comma separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "group_size", required_unless_present = "group_size")]
        groups: Option<Vec<usize>>,
        /// Contiguous groups of this size.
        #[arg(long)]
        group_size: Option<usize>,
        /// Common level for every group.
        #[arg(long, conflicts_with = "lambdas", required_unless_present = "lambdas")]
        lambda: Option<f64>,
        /// One level per group, comma separated.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Least-squares refit on a support, or on every support of a path file.
    RefitGauss {
        #[command(flatten)]
        data: DataArgs,
        /// Column indices, comma separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "path", required_unless_present = "path")]
        support: Option<Vec<usize>>,
        /// Estimator path JSON.
        #[arg(long)]
        path: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// LinSelect over a fitted path.
    SelectLinselect {
        #[command(flatten)]
        data: DataArgs,
        /// Estimator path JSON; a Lasso path is computed when absent.
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "coordinate")]
        collection: Collection,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// V-fold cross-validation (or a single hold-out split) over a path.
    SelectCv {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "lasso")]
        estimator: Estimator,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Use one split with this training fraction instead of V folds.
        #[arg(long)]
        holdout: Option<f64>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Modified BIC or a plug-in penalty over a path.
    SelectBic {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "lasso")]
        estimator: Estimator,
        #[arg(long, value_enum, default_value = "modified-bic")]
        rule: BicRule,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Slope heuristic over the best fit of each dimension on a path.
    SelectSlope {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "lasso")]
        estimator: Estimator,
        #[arg(long, value_enum, default_value = "bm")]
        shape: SlopeShape,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exhaustive subset benchmarks (p <= 12).
    BenchOracle {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        method: OracleMethod,
        /// Known noise variance, required by `bm` and `lb`.
        #[arg(long)]
        sigma2: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Changepoint segmentation of a single-column signal.
    Segment {
        /// Single-column CSV.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        header: bool,
        #[arg(long, value_enum)]
        method: SegMethod,
        /// Largest number of breakpoints considered.
        #[arg(long)]
        q_max: Option<usize>,
        /// Known variance for `lebarbier`; a difference-based estimate otherwise.
        #[arg(long)]
        sigma2: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulation experiments.
    Simulate {
        #[arg(long, value_enum)]
        experiment: Experiment,
        /// JSON object overriding fields of the default configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the raw per-replication samples as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// LinSelect penalty table as CSV rows `n,D,delta,pen_delta`.
    Pen {
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',')]
        d: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        delta: Vec<f64>,
    },
    /// Largest admissible sparsity `k*` for `(n, p)`.
    Kstar {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
    },
}

/// Failure surfaced on the error stream as `{code, message}`.
#[derive(Debug, Serialize)]
struct Failure {
    code: String,
    message: String,
    #[serde(skip)]
    exit: u8,
}

impl From<sparsetune_core::Error> for Failure {
    fn from(e: sparsetune_core::Error) -> Self {
        let exit = if matches!(e, sparsetune_core::Error::Config(_)) { 2 } else { 1 };
        Failure { code: e.code().to_string(), message: e.to_string(), exit }
    }
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: "usage_error".into(), message: message.into(), exit: 2 }
    }
}

fn report(f: &Failure) -> ExitCode {
    let line = serde_json::to_string(f).unwrap_or_else(|_| format!("{{\"code\":\"{}\"}}", f.code));
    let _ = writeln!(std::io::stderr(), "{line}");
    ExitCode::from(f.exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                kind => {
                    let code = match kind {
                        ErrorKind::UnknownArgument => "unknown_flag",
                        ErrorKind::InvalidSubcommand => "unknown_subcommand",
                        ErrorKind::MissingRequiredArgument => "missing_argument",
                        ErrorKind::ValueValidation | ErrorKind::InvalidValue => "invalid_value",
                        _ => "usage_error",
                    };
                    let msg = e.render().to_string();
                    return report(&Failure { code: code.into(), message: msg.trim().to_string(), exit: 2 });
                }
            }
        }
    };
    let run = || commands::dispatch(cli.command);
    let result = match cli.workers {
        Some(0) => Err(Failure::usage("--workers must be at least 1")),
        Some(w) => sparsetune_core::sim::with_workers(w, run).map_err(Failure::from).and_then(|r| r),
        None => run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}
