use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use wigner_lss::harness::{run_experiment, run_validate, write_outputs, ExperimentConfig, ExperimentKind, Overrides};

#[derive(Parser)]
#[command(name = "wigner-lss", version, about = "Monte Carlo experiments on linear spectral statistics")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Empirical mean, variance and characteristic function of a linear statistic
    Clt(RunArgs),
    /// Variance of Littlewood-Paley bands across k
    BandVariance(RunArgs),
    /// Covariance of Im tr G on a grid of spectral parameters
    CovarianceGrid(RunArgs),
    /// Growth of the eigenvalue counting variance in n
    CountingVariance(RunArgs),
    /// Probability of an eigenvalue in a small window, across window sizes
    Wegner(RunArgs),
    /// Characteristics and moment identities of Dyson Brownian motion
    DbmMoments(RunArgs),
    /// Coupled DBM runs against the homogenization prediction
    Homogenization(RunArgs),
    /// Gaussian-ensemble kernels against bounds, corrections and Monte Carlo
    KernelValidate(RunArgs),
    /// Fast deterministic invariant suite
    Validate {
        /// Directory for report.json and CSV tables
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config
    #[arg(long)]
    config: PathBuf,
    /// Matrix dimension
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.json and CSV tables (default: out/<kind>)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn kind(&self) -> Option<ExperimentKind> {
        Some(match self {
            Command::Clt(_) => ExperimentKind::Clt,
            Command::BandVariance(_) => ExperimentKind::BandVariance,
            Command::CovarianceGrid(_) => ExperimentKind::CovarianceGrid,
            Command::CountingVariance(_) => ExperimentKind::CountingVariance,
            Command::Wegner(_) => ExperimentKind::Wegner,
            Command::DbmMoments(_) => ExperimentKind::DbmMoments,
            Command::Homogenization(_) => ExperimentKind::Homogenization,
            Command::KernelValidate(_) => ExperimentKind::KernelValidate,
            Command::Validate { .. } => return None,
        })
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring thread pool")?;
    }
    let (report, dir) = match (cli.command.kind(), cli.command) {
        (_, Command::Validate { out }) => (run_validate(), out.unwrap_or_else(|| PathBuf::from("out/validate"))),
        (
            Some(kind),
            Command::Clt(a)
            | Command::BandVariance(a)
            | Command::CovarianceGrid(a)
            | Command::CountingVariance(a)
            | Command::Wegner(a)
            | Command::DbmMoments(a)
            | Command::Homogenization(a)
            | Command::KernelValidate(a),
        ) => {
            let mut cfg = ExperimentConfig::from_file(&a.config)?;
            if cfg.kind != kind {
                bail!("{} describes a {} experiment, not {kind}", a.config.display(), cfg.kind);
            }
            cfg.apply(&Overrides { n: a.n, trials: a.trials, seed: a.seed, out: a.out });
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(kind.as_str()));
            (run_experiment(&cfg)?, dir)
        }
        (None, _) => unreachable!("every experiment subcommand has a kind"),
    };
    print!("{}", report.summary());
    let written = write_outputs(&report, &dir).with_context(|| format!("writing outputs to {}", dir.display()))?;
    let failed = report.failures().count();
    println!(
        "{}: {} metrics, {failed} failed, {:.1} s; wrote {} files to {}",
        report.suite,
        report.metrics.len(),
        report.wall_clock_seconds,
        written.len(),
        dir.display()
    );
    Ok(report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
