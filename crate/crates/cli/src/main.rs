use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esn_core::config::{GlobalConfig, CONFIG_ENV};
use esn_core::data::Frequency;
use esn_core::readout::IcKind;
use esn_core::{Error, ErrorClass};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "esn", version, about = "Echo state network forecasting, benchmarks and grid sweeps")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Series CSV: one row per series, id first, then values.
    #[arg(long)]
    input: PathBuf,

    /// Matching test-window CSV for pre-split data; otherwise the last
    /// horizon values of each input row are held out.
    #[arg(long)]
    test: Option<PathBuf>,

    #[arg(long)]
    freq: Option<Frequency>,
}

#[derive(Args, Debug, Clone, Default)]
struct EsnArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Information criterion: AIC, AICc, BIC or HQC.
    #[arg(long)]
    ic: Option<IcKind>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw disjoint parameter and forecast datasets from a series pool.
    Sample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        freq: Option<Frequency>,
        /// Series per dataset.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for parameter.csv, forecast.csv and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-series length and trend and seasonal strength.
    Characterize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        freq: Option<Frequency>,
        #[arg(long)]
        out: PathBuf,
        /// Optional histogram of both strengths over ten bins.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Fit one ESN on a full series and save the model.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        freq: Option<Frequency>,
        /// Series id; defaults to the first row.
        #[arg(long)]
        series: Option<String>,
        #[command(flatten)]
        esn: EsnArgs,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast one or all series past their last observation.
    Forecast {
        /// Series CSV to fit on; not needed with --model.
        #[arg(long, required_unless_present = "model")]
        input: Option<PathBuf>,
        #[arg(long)]
        freq: Option<Frequency>,
        #[arg(long)]
        series: Option<String>,
        /// Previously saved model; skips fitting.
        #[arg(long, conflicts_with_all = ["input", "series"])]
        model: Option<PathBuf>,
        /// Horizon; defaults to the frequency's horizon.
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        esn: EsnArgs,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Log per-series failures and succeed if any series succeeded.
        #[arg(long)]
        keep_going: bool,
    },
    /// Score the ESN and the simple benchmarks on held-out windows.
    Benchmark {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        esn: EsnArgs,
        /// Comma-separated model names; defaults to all registered models.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        keep_going: bool,
    },
    /// Run every grid configuration on every series.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        /// TOML file overriding the grid value lists.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Master seed for per-task seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Continue an interrupted sweep in the same directory.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        top_k: Option<usize>,
        /// Stop after this many new records (leaves a resumable store).
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Rebuild summaries from a sweep records.csv or a benchmark accuracy.csv.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
    },
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = GlobalConfig::load(cli.config.as_deref())?;
    commands::dispatch(cli.command, cfg)
}
