//! Command-line harness for prior tail experiments, k-d partitions, the
//! posterior oracle and the concentration study.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gwbart::SplitSchedule;

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "gwbart", version, about = "Tree-prior tail bounds and BART experiments")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving report files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample tree shapes from the prior and check every tail bound against them.
    SamplePrior(commands::SamplePriorArgs),
    /// Evaluate the analytic tail bounds without sampling.
    Bounds(commands::BoundsArgs),
    /// Build a k-d tree and report its balance and prior mass.
    Kdtree(commands::KdtreeArgs),
    /// Compare single-tree MCMC visit frequencies with the enumerated posterior.
    PosteriorOracle(commands::PosteriorOracleArgs),
    /// Fit a sum-of-trees model to a CSV dataset.
    Fit(commands::FitArgs),
    /// Measure posterior error rates and tree sizes across sample sizes.
    Concentration(commands::ConcentrationArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Poly,
    Geometric,
    Table,
}

/// Split schedule flags shared by several subcommands.
#[derive(Debug, Clone, Args)]
struct ScheduleArgs {
    #[arg(long = "schedule", value_enum)]
    family: Option<Family>,
    /// Scale parameter; defaults to 0.95 (poly) or 0.25 (geometric).
    #[arg(long)]
    alpha: Option<f64>,
    /// Polynomial decay exponent.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Geometric base factor; defaults to alpha.
    #[arg(long)]
    xi: Option<f64>,
    /// Per-depth split probabilities for the table schedule.
    #[arg(long, value_delimiter = ',')]
    probs: Vec<f64>,
    /// Nodes at this depth or deeper never split.
    #[arg(long)]
    max_depth: Option<u32>,
}

impl ScheduleArgs {
    fn build(&self, default: Family) -> gwbart::Result<SplitSchedule> {
        let schedule = match self.family.unwrap_or(default) {
            Family::Poly => SplitSchedule::polynomial(self.alpha.unwrap_or(0.95), self.gamma)?,
            Family::Geometric => {
                let alpha = self.alpha.unwrap_or(0.25);
                SplitSchedule::geometric_with_base(alpha, self.xi.unwrap_or(alpha))?
            }
            Family::Table => SplitSchedule::table(self.probs.clone())?,
        };
        Ok(match self.max_depth {
            Some(cap) => schedule.with_max_depth(cap),
            None => schedule,
        })
    }
}

/// Outcome of a subcommand that ran to completion.
pub(crate) enum Status {
    Ok,
    /// An invariant the command checks did not hold.
    Violated(String),
}

pub(crate) struct Context {
    seed: u64,
    out_dir: PathBuf,
    format: Format,
}

fn usage_error(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<gwbart::Error>(),
        Some(
            gwbart::Error::Parameter(_)
                | gwbart::Error::Parse { .. }
                | gwbart::Error::Capacity { .. }
                | gwbart::Error::EnumerationLimit { .. }
        )
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let ctx = Context { seed: cli.seed, out_dir: cli.out_dir, format: cli.format };
    let result = std::fs::create_dir_all(&ctx.out_dir).map_err(anyhow::Error::from).and_then(|_| match &cli.command {
        Command::SamplePrior(a) => commands::sample_prior(&ctx, a),
        Command::Bounds(a) => commands::bounds(&ctx, a),
        Command::Kdtree(a) => commands::kdtree(&ctx, a),
        Command::PosteriorOracle(a) => commands::posterior_oracle(&ctx, a),
        Command::Fit(a) => commands::fit(&ctx, a),
        Command::Concentration(a) => commands::concentration(&ctx, a),
    });
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violated(what)) => {
            eprintln!("invariant violated: {what}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if usage_error(&e) { 2 } else { 1 })
        }
    }
}
