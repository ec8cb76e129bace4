mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Goodness-of-fit backtesting of interest-rate scenario generators.
#[derive(Debug, Parser)]
#[command(name = "gofbt", version, about)]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON object of knob values; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Base seed of every random stream.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Tail probability of the test (significance level).
    #[arg(long)]
    pub confidence: Option<f64>,

    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    /// Monte Carlo trials of each null distribution used for thresholds.
    #[arg(long)]
    pub threshold_trials: Option<usize>,

    /// Seed of the threshold null distributions.
    #[arg(long)]
    pub threshold_seed: Option<u64>,

    /// `mc` (Monte Carlo at the actual n) or `table` (asymptotic AD table).
    #[arg(long)]
    pub thresholds: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test statistic and verdict for a file of PIT values.
    Stat {
        /// CSV with one probability per row (optional `pit` header).
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated tests: ad, ad-asym, ks, cm.
        #[arg(long)]
        test: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo percentile table of a statistic at sample size n.
    Critvals {
        #[arg(long)]
        test: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Also write the sorted null draws.
        #[arg(long)]
        draws: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Coefficient of variation report for n, and the curve up to --max-n.
    Cov {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        max_n: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// OU log-cycle paths from given parameters, or from a rate history.
    Simulate {
        /// `date,rate` CSV; when given, the model is calibrated on it.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        y0: Option<f64>,
        /// Horizon in years.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Rolling backtest of a rate history.
    Backtest {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Forecast horizon in years.
        #[arg(long)]
        horizon: Option<f64>,
        /// Calibration window in years.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        n_scenarios: Option<usize>,
        #[arg(long)]
        test: Option<String>,
        /// Comma-separated forecast dates (YYYY-MM-DD); default is a stride
        /// of one horizon from the first feasible date.
        #[arg(long)]
        dates: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce a figure or table: fig1, fig2, fig3, fig4, fig5, fig7, fig8, table3.
    Experiment {
        figure: String,
        #[arg(long)]
        trials: Option<usize>,
        /// `date,rate` CSV for table3 (default: bundled fixture).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated gamma values for table3.
        #[arg(long)]
        gamma: Option<String>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        window: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.chain().any(is_broken_pipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn is_broken_pipe(e: &(dyn std::error::Error + 'static)) -> bool {
    e.downcast_ref::<std::io::Error>()
        .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}
