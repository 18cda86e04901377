use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wesbench::bench::commands::{GT_FILE, TICA_FILE, WE_FILE};
use wesbench::bench::{
    cmd_benchmark, cmd_reference, cmd_report, cmd_tica_fit, cmd_we, BenchmarkConfig, WeOutcome, WeRunOptions,
};
use wesbench::Error;

/// Weighted-ensemble benchmarking against unbiased reference simulations.
#[derive(Parser)]
#[command(name = "wesbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Benchmark configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Derive every seed from this value, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the unbiased reference simulations and fit the TICA model.
    Reference {
        #[command(flatten)]
        common: Common,
    },
    /// Refit the TICA model on an existing reference trajectory.
    TicaFit {
        #[command(flatten)]
        common: Common,
        /// Reference trajectory (defaults to <output_dir>/gt.wetrj).
        gt: Option<PathBuf>,
    },
    /// Run or resume the weighted-ensemble simulation.
    WeRun {
        #[command(flatten)]
        common: Common,
        /// TICA model (defaults to <output_dir>/tica_model.json).
        tica: Option<PathBuf>,
        /// Reference trajectory for coverage-based stopping.
        gt: Option<PathBuf>,
        /// Ignore any checkpoint and start from iteration 0.
        #[arg(long)]
        fresh: bool,
        /// Pause after this many iterations, keeping the checkpoint.
        #[arg(long)]
        stop_after: Option<u32>,
    },
    /// Compare a WE run with the reference and write report.json and plots.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Reference trajectory (defaults to <output_dir>/gt.wetrj).
        gt: Option<PathBuf>,
        /// WE trajectory (defaults to <output_dir>/we.wetrj).
        we: Option<PathBuf>,
        /// TICA model (defaults to <output_dir>/tica_model.json).
        #[arg(long)]
        tica: Option<PathBuf>,
    },
    /// Print a stored report as markdown.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report file (defaults to <output_dir>/report.json).
        report: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<BenchmarkConfig, Error> {
    let cfg = BenchmarkConfig::load(&common.config)?;
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn or_default(path: Option<PathBuf>, cfg: &BenchmarkConfig, name: &str) -> PathBuf {
    path.unwrap_or_else(|| cfg.output_dir.join(name))
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Reference { common } => {
            let cfg = load(&common)?;
            let out = cmd_reference(&cfg)?;
            println!("{}\n{}", show(&out.trajectory), show(&out.tica));
        }
        Command::TicaFit { common, gt } => {
            let cfg = load(&common)?;
            let gt = or_default(gt, &cfg, GT_FILE);
            println!("{}", show(&cmd_tica_fit(&cfg, &gt)?));
        }
        Command::WeRun {
            common,
            tica,
            gt,
            fresh,
            stop_after,
        } => {
            let cfg = load(&common)?;
            let tica = or_default(tica, &cfg, TICA_FILE);
            match cmd_we(&cfg, &tica, gt.as_deref(), WeRunOptions { fresh, stop_after })? {
                WeOutcome::Finished {
                    trajectory,
                    stop_reason,
                } => {
                    println!("{}", show(&trajectory));
                    log::info!("stopped: {stop_reason:?}");
                }
                WeOutcome::Paused { iteration } => {
                    println!("paused after iteration {iteration}; rerun to resume");
                }
            }
        }
        Command::Benchmark { common, gt, we, tica } => {
            let cfg = load(&common)?;
            let gt = or_default(gt, &cfg, GT_FILE);
            let we = or_default(we, &cfg, WE_FILE);
            let tica = or_default(tica, &cfg, TICA_FILE);
            let out = cmd_benchmark(&cfg, &gt, &we, &tica)?;
            println!("{}", show(&out.report));
            for p in out.plots {
                println!("{}", show(&p));
            }
        }
        Command::Report { common, report } => {
            let cfg = load(&common)?;
            let report = or_default(report, &cfg, wesbench::bench::commands::REPORT_FILE);
            print!("{}", cmd_report(&report)?);
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("WESBENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("WESBENCH_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match &e {
                Error::Config(_) => 2,
                e if e.is_numeric() => 3,
                _ => 1,
            })
        }
    }
}
