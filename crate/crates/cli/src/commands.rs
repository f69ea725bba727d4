use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::{Args, ValueEnum};
use gwbart::bart::{chain_tree_counts, enumerate_posterior, oracle_fixture, run_chain, total_variation, BartConfig};
use gwbart::bart::{LeafPrior, ModelSnapshot, MoveCounts};
use gwbart::branching::{
    agresti_extinction_bound, chernoff_progeny_bound, expected_generation_size, extinction_decay_shape,
    generation_mean, markov_extinction_bound, mu_prefix, target_rate_check, ChernoffMode, OffspringLaw,
    RootConvention, TargetRateReport,
};
use gwbart::data::load_dataset;
use gwbart::experiment::{
    run_concentration, ConcentrationConfig, ConcentrationReport, DesignKind, RateSpec, SyntheticTarget, TargetSource,
};
use gwbart::kd::{build_kd_tree, chop_ensemble, ensemble_heights, kd_prior_mass, project_step_function, KdPriorMass};
use gwbart::kd::{KdTreeDocument, StepFit};
use gwbart::prior::DEFAULT_MAX_NODES;
use gwbart::survival::{monte_carlo_survival, write_bound_csv, BoundReport, SurvivalConfig};
use gwbart::{stream_rng, BinaryTreePartition, Design, ScheduleKind, SplitSchedule};
use serde::Serialize;

use crate::output::{self, num, Format};
use crate::{Context, Family, ScheduleArgs, Status};

fn parameter(msg: impl Into<String>) -> anyhow::Error {
    gwbart::Error::Parameter(msg.into()).into()
}

fn announce(path: &std::path::Path) {
    println!("wrote {}", path.display());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Convention {
    /// First offspring law taken from the schedule.
    Direct,
    /// Root treated as having exactly one offspring.
    Forced,
}

impl From<Convention> for RootConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Direct => RootConvention::Direct,
            Convention::Forced => RootConvention::Forced,
        }
    }
}

#[derive(Debug, Args)]
pub struct SamplePriorArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
    /// Progeny grid is `1..kmax`.
    #[arg(long, default_value_t = 200)]
    kmax: u64,
    /// Extinction grid is `1..=tmax`.
    #[arg(long, default_value_t = 10)]
    tmax: u64,
    #[arg(long, default_value_t = 0.25)]
    rate_constant: f64,
    #[arg(long, value_enum, default_value_t = Convention::Direct)]
    convention: Convention,
    #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
    max_nodes: usize,
    /// Standard errors of slack allowed before a bound counts as violated.
    #[arg(long, default_value_t = 3.0)]
    z: f64,
}

#[derive(Serialize)]
struct RateSummary {
    a: f64,
    holds_from: Option<u64>,
    certified_from: Option<u64>,
    failures: u64,
    last_failure: Option<u64>,
}

impl From<&TargetRateReport> for RateSummary {
    fn from(r: &TargetRateReport) -> Self {
        Self {
            a: r.a,
            holds_from: r.holds_from,
            certified_from: r.certified_from,
            failures: r.failures,
            last_failure: r.last_failure,
        }
    }
}

#[derive(Serialize)]
struct SamplePriorReport<'a> {
    schedule: &'a SplitSchedule,
    draws: u64,
    seed: u64,
    truncated: u64,
    rate_condition: RateSummary,
    violations: Vec<String>,
    reports: &'a [BoundReport],
}

pub fn sample_prior(ctx: &Context, args: &SamplePriorArgs) -> Result<Status> {
    let schedule = args.schedule.build(Family::Poly)?;
    if args.kmax < 2 || args.tmax < 1 {
        return Err(parameter("need kmax >= 2 and tmax >= 1"));
    }
    let config = SurvivalConfig {
        progeny_grid: (1..args.kmax).collect(),
        extinction_grid: (1..=args.tmax).collect(),
        draws: args.draws,
        seed: ctx.seed,
        max_nodes: args.max_nodes,
        convention: args.convention.into(),
        rate_constant: args.rate_constant,
    };
    let (sample, reports) = monte_carlo_survival(&schedule, &config)?;
    let rate = target_rate_check(&schedule, args.rate_constant, 1, args.kmax)?;
    let violations: Vec<String> = reports.iter().filter_map(|r| r.first_violation(args.z)).map(|v| v.to_string()).collect();

    println!("schedule {}: {} draws, {} truncated", schedule.label(), sample.draws, sample.truncated);
    for r in &reports {
        let status = match r.first_violation(args.z) {
            Some(v) => format!("violated at {}", v.grid),
            None => "dominates".into(),
        };
        println!("  {:<20} {status}", r.method.label());
    }
    match (rate.certified_from, rate.last_failure) {
        (Some(k), _) => println!("  rate condition a={}: certified for all k >= {k}", rate.a),
        (None, Some(k)) => println!("  rate condition a={}: fails (last failure at k = {k}, not certified)", rate.a),
        (None, None) => println!("  rate condition a={}: holds on 1..={} but not certified beyond", rate.a, rate.k_max),
    }

    let path = match ctx.format {
        Format::Json => output::write_json(
            &ctx.out_dir,
            "sample_prior",
            &SamplePriorReport {
                schedule: &schedule,
                draws: sample.draws,
                seed: ctx.seed,
                truncated: sample.truncated,
                rate_condition: (&rate).into(),
                violations: violations.clone(),
                reports: &reports,
            },
        )?,
        Format::Csv => {
            let (path, w) = output::create(&ctx.out_dir, "sample_prior.csv")?;
            write_bound_csv(&reports, w)?;
            path
        }
    };
    announce(&path);
    Ok(match violations.into_iter().next() {
        Some(v) => Status::Violated(v),
        None => Status::Ok,
    })
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 200)]
    kmax: u64,
    #[arg(long, default_value_t = 10)]
    tmax: u32,
    #[arg(long, default_value_t = 0.25)]
    rate_constant: f64,
}

#[derive(Serialize)]
struct ExtinctionRow {
    t: u32,
    generation_mean: f64,
    /// Closed-form generation mean for uncapped polynomial schedules.
    generation_formula: Option<f64>,
    markov: f64,
    agresti_direct: f64,
    agresti_forced: f64,
    decay_shape: Option<f64>,
}

#[derive(Serialize)]
struct ProgenyRow {
    k: u64,
    mu: f64,
    chernoff_half_log_k: f64,
    chernoff_optimal: f64,
    optimal_c: f64,
    target_rate: f64,
    target_rate_certified: bool,
}

#[derive(Serialize)]
struct BoundsReport<'a> {
    schedule: &'a SplitSchedule,
    extinction: Vec<ExtinctionRow>,
    progeny: Vec<ProgenyRow>,
    rate_condition: RateSummary,
}

pub fn bounds(ctx: &Context, args: &BoundsArgs) -> Result<Status> {
    let schedule = args.schedule.build(Family::Poly)?;
    if args.kmax < 2 || args.tmax < 1 {
        return Err(parameter("need kmax >= 2 and tmax >= 1"));
    }
    let law = OffspringLaw::from_schedule(&schedule, args.tmax as usize);
    let poly = match (&schedule.kind, schedule.max_depth) {
        (ScheduleKind::PolynomialDecay { alpha, gamma }, None) => Some((*alpha, *gamma)),
        _ => None,
    };
    let mut extinction = Vec::new();
    for t in 1..=args.tmax {
        extinction.push(ExtinctionRow {
            t,
            generation_mean: generation_mean(&schedule, t),
            generation_formula: poly.map(|(a, g)| expected_generation_size(a, g, t)),
            markov: markov_extinction_bound(&schedule, t),
            agresti_direct: agresti_extinction_bound(&law, t as usize, RootConvention::Direct)?.value,
            agresti_forced: agresti_extinction_bound(&law, t as usize, RootConvention::Forced)?.value,
            decay_shape: poly.map(|(a, g)| extinction_decay_shape(a, g, t)),
        });
    }
    let rate = target_rate_check(&schedule, args.rate_constant, 1, args.kmax)?;
    let mut progeny = Vec::new();
    for k in 1..args.kmax {
        let half = chernoff_progeny_bound(&schedule, k, ChernoffMode::HalfLogK)?;
        let opt = chernoff_progeny_bound(&schedule, k, ChernoffMode::Optimized)?;
        let kf = k as f64;
        progeny.push(ProgenyRow {
            k,
            mu: mu_prefix(&schedule, k),
            chernoff_half_log_k: half.value,
            chernoff_optimal: opt.value,
            optimal_c: opt.c,
            target_rate: (-args.rate_constant * kf * kf.ln()).exp(),
            target_rate_certified: rate.certified_from.is_some_and(|from| k >= from),
        });
    }
    println!(
        "schedule {}: markov(t=1) {:.4}, agresti(t=1) {:.4}, chernoff(k=10) {:.4}, rate condition certified from {:?}",
        schedule.label(),
        extinction[0].markov,
        extinction[0].agresti_direct,
        progeny.get(9).map_or(f64::NAN, |r| r.chernoff_optimal),
        rate.certified_from
    );
    let path = match ctx.format {
        Format::Json => output::write_json(
            &ctx.out_dir,
            "bounds",
            &BoundsReport { schedule: &schedule, extinction, progeny, rate_condition: (&rate).into() },
        )?,
        Format::Csv => {
            let mut rows = Vec::new();
            for r in &extinction {
                let t = r.t.to_string();
                rows.push(vec![t.clone(), "generation_mean".into(), num(r.generation_mean)]);
                if let Some(v) = r.generation_formula {
                    rows.push(vec![t.clone(), "generation_formula".into(), num(v)]);
                }
                rows.push(vec![t.clone(), "markov".into(), num(r.markov)]);
                rows.push(vec![t.clone(), "agresti_direct".into(), num(r.agresti_direct)]);
                rows.push(vec![t, "agresti_forced".into(), num(r.agresti_forced)]);
            }
            for r in &progeny {
                let k = r.k.to_string();
                rows.push(vec![k.clone(), "mu".into(), num(r.mu)]);
                rows.push(vec![k.clone(), "chernoff_half_log_k".into(), num(r.chernoff_half_log_k)]);
                rows.push(vec![k.clone(), "chernoff_optimal".into(), num(r.chernoff_optimal)]);
                if r.target_rate_certified {
                    rows.push(vec![k, "target_rate".into(), num(r.target_rate)]);
                }
            }
            output::write_rows(&ctx.out_dir, "bounds.csv", &["grid", "method", "value"], rows)?
        }
    };
    announce(&path);
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct KdtreeArgs {
    /// Dataset whose outputs are projected onto the partition.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Points of the built-in design when no dataset is given.
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Rounds over all coordinates.
    #[arg(long, default_value_t = 3)]
    rounds: u32,
    /// Geometric schedule scale for the prior mass.
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long)]
    xi: Option<f64>,
    /// Split the tree into this many subtrees.
    #[arg(long)]
    trees: Option<usize>,
}

#[derive(Serialize)]
struct ChopSummary {
    trees: usize,
    leaves: Vec<usize>,
    reconstruction_error: Option<f64>,
}

#[derive(Serialize)]
struct KdReport {
    n: usize,
    p: usize,
    rounds: u32,
    leaves: usize,
    balanced: bool,
    occupancy: Vec<usize>,
    prior_mass: KdPriorMass,
    projection: Option<StepFit>,
    chopped: Option<ChopSummary>,
}

pub fn kdtree(ctx: &Context, args: &KdtreeArgs) -> Result<Status> {
    let (design, target) = match &args.data {
        Some(path) => {
            let (d, y) = load_dataset(path)?;
            (d, Some(y))
        }
        None if args.p == 1 => (Design::regular_grid_1d(args.n)?, None),
        None => (Design::scrambled_grid(args.n, args.p)?, None),
    };
    let kd = build_kd_tree(&design, args.rounds)?;
    let schedule = SplitSchedule::geometric_with_base(args.alpha, args.xi.unwrap_or(args.alpha))?;
    let mass = kd_prior_mass(&kd, &schedule, &design)?;
    let projection = target.as_ref().map(|y| project_step_function(&kd.tree, &design, y)).transpose()?;
    let chopped = match args.trees {
        Some(count) => {
            let parts = chop_ensemble(&kd, count)?;
            let reconstruction_error = projection.as_ref().map(|fit| {
                let heights = ensemble_heights(&kd, &parts, &design, fit);
                (0..design.n())
                    .map(|i| {
                        let sum: f64 =
                            parts.iter().zip(&heights).map(|(c, h)| h[c.tree.leaf_assignment(&design)[i]]).sum();
                        (sum - fit.fitted[i]).abs()
                    })
                    .fold(0.0, f64::max)
            });
            Some(ChopSummary { trees: count, leaves: parts.iter().map(|c| c.tree.leaf_count()).collect(), reconstruction_error })
        }
        None => None,
    };
    let report = KdReport {
        n: design.n(),
        p: design.p(),
        rounds: args.rounds,
        leaves: kd.leaf_count(),
        balanced: kd.is_balanced(&design),
        occupancy: kd.occupancy(&design),
        prior_mass: mass,
        projection,
        chopped,
    };
    println!(
        "k-d tree n={} p={} rounds={}: {} leaves, balanced {}, log prior {:.4} (per-depth bound {:.4})",
        report.n, report.p, report.rounds, report.leaves, report.balanced, report.prior_mass.exact, report.prior_mass.per_depth_bound
    );
    let doc: KdTreeDocument = kd.to_document();
    announce(&output::write_json(&ctx.out_dir, "kdtree_tree", &doc)?);
    let path = match ctx.format {
        Format::Json => output::write_json(&ctx.out_dir, "kdtree", &report)?,
        Format::Csv => {
            let values = report.projection.as_ref().map(|f| &f.leaf_values);
            let rows = report.occupancy.iter().enumerate().map(|(k, occ)| {
                vec![k.to_string(), occ.to_string(), values.map_or(String::new(), |v| num(v[k]))]
            });
            output::write_rows(&ctx.out_dir, "kdtree.csv", &["leaf", "occupancy", "value"], rows)?
        }
    };
    announce(&path);

    let mass = &report.prior_mass;
    if !report.balanced {
        return Ok(Status::Violated("leaf occupancies differ by more than one".into()));
    }
    if !mass.exact_dominates_per_depth() || !mass.per_node_chain_monotone() {
        return Ok(Status::Violated(format!(
            "exact log prior {} below the per-depth bound {} or bound chain not monotone",
            mass.exact, mass.per_depth_bound
        )));
    }
    if let Some(err) = report.chopped.as_ref().and_then(|c| c.reconstruction_error) {
        if err > 1e-12 {
            return Ok(Status::Violated(format!("chopped ensemble misses the projection by {err:e}")));
        }
    }
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct PosteriorOracleArgs {
    /// One-dimensional dataset with at most 12 rows; defaults to a bundled six-point fixture.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Sweeps kept after burn-in.
    #[arg(long, default_value_t = 100_000)]
    sweeps: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 2)]
    depth_cap: u32,
    /// Leaf prior variance; defaults to 1.
    #[arg(long, default_value_t = 1.0)]
    leaf_variance: f64,
    /// Largest accepted total-variation distance.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
}

#[derive(Serialize)]
struct OracleRow {
    tree: String,
    leaves: usize,
    exact: f64,
    empirical: f64,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    schedule: &'a SplitSchedule,
    n: usize,
    sweeps: usize,
    burn_in: usize,
    threshold: f64,
    total_variation: f64,
    trees: Vec<OracleRow>,
}

fn describe(tree: &BinaryTreePartition) -> String {
    tree.bfs_rules()
        .iter()
        .map(|r| match r {
            Some(rule) => format!("x{}<={}", rule.var + 1, rule.threshold),
            None => ".".into(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn posterior_oracle(ctx: &Context, args: &PosteriorOracleArgs) -> Result<Status> {
    let (design, y) = match &args.data {
        Some(path) => load_dataset(path)?,
        None => oracle_fixture(),
    };
    if design.n() > 12 || design.p() != 1 || args.depth_cap > 2 {
        return Err(gwbart::Error::EnumerationLimit { limit: 12 }).map_err(|e| {
            anyhow::Error::from(e).context(format!(
                "enumeration needs n <= 12, p = 1 and depth cap <= 2 (got n = {}, p = {}, cap = {})",
                design.n(),
                design.p(),
                args.depth_cap
            ))
        });
    }
    let schedule = args.schedule.build(Family::Poly)?.with_max_depth(args.depth_cap);
    let mut config = BartConfig::new(1, schedule.clone());
    config.leaf_prior = LeafPrior::Fixed(args.leaf_variance);
    config.burn_in = args.burn_in;
    config.sweeps = args.burn_in + args.sweeps;
    config.validate()?;
    let table = enumerate_posterior(&design, &y, &schedule, config.noise_variance, args.leaf_variance, 1_000_000)?;
    let counts = chain_tree_counts(&design, &y, &config, &mut stream_rng(ctx.seed, 0))?;
    let tv = total_variation(&table, &counts);
    let kept = counts.values().sum::<u64>().max(1) as f64;
    let mut trees: Vec<OracleRow> = table
        .entries
        .iter()
        .map(|e| OracleRow {
            tree: describe(&e.tree),
            leaves: e.tree.leaf_count(),
            exact: e.probability,
            empirical: counts.get(&e.tree.key()).copied().unwrap_or(0) as f64 / kept,
        })
        .collect();
    trees.sort_by(|a, b| b.exact.total_cmp(&a.exact));
    println!("posterior oracle: {} trees enumerated, TV distance {tv:.4} (threshold {})", trees.len(), args.threshold);
    let path = match ctx.format {
        Format::Json => output::write_json(
            &ctx.out_dir,
            "posterior_oracle",
            &OracleReport {
                schedule: &schedule,
                n: design.n(),
                sweeps: args.sweeps,
                burn_in: args.burn_in,
                threshold: args.threshold,
                total_variation: tv,
                trees,
            },
        )?,
        Format::Csv => output::write_rows(
            &ctx.out_dir,
            "posterior_oracle.csv",
            &["tree", "leaves", "exact", "empirical"],
            trees.iter().map(|r| vec![r.tree.clone(), r.leaves.to_string(), num(r.exact), num(r.empirical)]),
        )?,
    };
    announce(&path);
    // A threshold of 1 or more admits every distance, including the empty chain's.
    Ok(if tv < args.threshold || args.threshold >= 1.0 {
        Status::Ok
    } else {
        Status::Violated(format!("total-variation distance {tv:.4} is not below {}", args.threshold))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LeafPriorKind {
    /// Variance 1/T.
    InverseTrees,
    /// Standard deviation 0.5/(k sqrt T).
    Calibrated,
    /// Variance given by --leaf-variance.
    Fixed,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 20)]
    trees: usize,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long, default_value_t = 200)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    moves_per_tree: usize,
    /// Map outputs to [-0.5, 0.5] before sampling.
    #[arg(long)]
    rescale: bool,
    #[arg(long, value_enum, default_value_t = LeafPriorKind::InverseTrees)]
    leaf_prior: LeafPriorKind,
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    #[arg(long)]
    leaf_variance: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    noise_variance: f64,
}

#[derive(Serialize)]
struct FitReport<'a> {
    n: usize,
    p: usize,
    config: &'a BartConfig,
    kept_sweeps: usize,
    mean_max_leaves: f64,
    posterior_mean_error: f64,
    moves: MoveCounts,
    posterior_mean: &'a [f64],
}

pub fn fit(ctx: &Context, args: &FitArgs) -> Result<Status> {
    let (design, y) = load_dataset(&args.data)?;
    let mut config = BartConfig::new(args.trees, args.schedule.build(Family::Poly)?);
    config.leaf_prior = match args.leaf_prior {
        LeafPriorKind::InverseTrees => LeafPrior::InverseTrees,
        LeafPriorKind::Calibrated => LeafPrior::Calibrated { k: args.k },
        LeafPriorKind::Fixed => {
            LeafPrior::Fixed(args.leaf_variance.ok_or_else(|| parameter("--leaf-prior fixed needs --leaf-variance"))?)
        }
    };
    config.noise_variance = args.noise_variance;
    config.rescale_outputs = args.rescale;
    config.sweeps = args.sweeps;
    config.burn_in = args.burn_in;
    config.thin = args.thin;
    config.moves_per_tree = args.moves_per_tree;
    let chain = run_chain(&design, &y, &config, &mut stream_rng(ctx.seed, 0))?;

    let (path, w) = output::create(&ctx.out_dir, "trace.csv")?;
    chain.trace.write_csv(config.num_trees, w)?;
    announce(&path);
    let model = ModelSnapshot { scaling: chain.scaling, ensemble: chain.final_ensemble.clone() };
    announce(&output::write_json(&ctx.out_dir, "model", &model)?);

    let error = gwbart::kd::empirical_norm(chain.posterior_mean.iter().zip(&y).map(|(f, v)| f - v));
    println!(
        "fit: {} sweeps kept, mean max leaves {:.2}, posterior-mean training error {error:.4}",
        chain.trace.records.len(),
        chain.mean_max_leaves()
    );
    let path = match ctx.format {
        Format::Json => output::write_json(
            &ctx.out_dir,
            "fit",
            &FitReport {
                n: design.n(),
                p: design.p(),
                config: &config,
                kept_sweeps: chain.trace.records.len(),
                mean_max_leaves: chain.mean_max_leaves(),
                posterior_mean_error: error,
                moves: chain.moves,
                posterior_mean: &chain.posterior_mean,
            },
        )?,
        Format::Csv => output::write_rows(
            &ctx.out_dir,
            "fit.csv",
            &["row", "y", "posterior_mean"],
            y.iter().zip(&chain.posterior_mean).enumerate().map(|(i, (a, b))| vec![(i + 1).to_string(), num(*a), num(*b)]),
        )?,
    };
    announce(&path);
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignChoice {
    Regular,
    Uniform,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    /// Bundled regression function: abs, sqrt-abs, additive-2d or constant.
    #[arg(long, default_value = "abs")]
    target: String,
    /// Dataset of true function values on a fixed design; replaces --target and --sizes.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Smoothness of the target; defaults to the bundled target's exponent.
    #[arg(long)]
    smoothness: Option<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![128usize, 512, 2048, 8192])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 20)]
    trees: usize,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1200)]
    sweeps: usize,
    #[arg(long, default_value_t = 200)]
    burn_in: usize,
    /// Tree sizes above this multiple of the oracle leaf count are flagged.
    #[arg(long, default_value_t = 4.0)]
    size_constant: f64,
    #[arg(long, value_enum, default_value_t = DesignChoice::Regular)]
    design: DesignChoice,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.2)]
    max_failure_rate: f64,
}

pub fn concentration(ctx: &Context, args: &ConcentrationArgs) -> Result<Status> {
    let (source, dim, default_smoothness) = match &args.data {
        Some(path) => {
            let (design, truth) = load_dataset(path)?;
            let p = design.p();
            (TargetSource::Table { design, truth }, p, None)
        }
        None => {
            let target = SyntheticTarget::from_name(&args.target)?;
            let design = match args.design {
                DesignChoice::Regular => DesignKind::Regular,
                DesignChoice::Uniform => DesignKind::Uniform,
            };
            (TargetSource::Synthetic { target, design }, target.dim(), Some(target.smoothness()))
        }
    };
    let smoothness = args
        .smoothness
        .or(default_smoothness)
        .ok_or_else(|| anyhow!(gwbart::Error::Parameter("--data needs --smoothness".into())))?;
    let sizes = match &source {
        TargetSource::Table { design, .. } => vec![design.n()],
        TargetSource::Synthetic { .. } => args.sizes.clone(),
    };
    let mut bart = BartConfig::new(args.trees, args.schedule.build(Family::Geometric)?);
    bart.sweeps = args.sweeps;
    bart.burn_in = args.burn_in;
    let config = ConcentrationConfig {
        spec: RateSpec { smoothness, dim, sizes, replicates: args.replicates },
        source,
        bart,
        noise_sd: args.noise_sd,
        size_constant: args.size_constant,
        seed: ctx.seed,
        max_failure_rate: args.max_failure_rate,
    };
    let report = run_concentration(&config)?;
    print_concentration(&report);

    let dat = output::write_table(
        &ctx.out_dir,
        "concentration.dat",
        " ",
        "# n mean_error se_error epsilon oracle_leaves mean_max_leaves mass_above",
        report.summaries.iter().map(|s| {
            vec![s.n.to_string(), num(s.mean_error), num(s.se_error), num(s.epsilon), num(s.oracle_leaves), num(s.mean_max_leaves), num(s.mass_above)]
        }),
    )?;
    announce(&dat);
    let path = match ctx.format {
        Format::Json => output::write_json(&ctx.out_dir, "concentration", &report)?,
        Format::Csv => output::write_rows(
            &ctx.out_dir,
            "concentration.csv",
            &["n", "replicate", "error", "mean_max_leaves", "mass_above", "failure"],
            report.replicates.iter().map(|r| {
                let opt = |v: Option<f64>| v.map_or(String::new(), num);
                vec![
                    r.n.to_string(),
                    r.replicate.to_string(),
                    opt(r.error),
                    opt(r.mean_max_leaves),
                    opt(r.mass_above),
                    r.failure.clone().unwrap_or_default().replace([',', '\n'], ";"),
                ]
            }),
        )?,
    };
    announce(&path);
    Ok(if report.too_many_failures {
        Status::Violated(format!("{:.0}% of replicates failed", 100.0 * report.failure_rate))
    } else {
        Status::Ok
    })
}

fn print_concentration(report: &ConcentrationReport) {
    for s in &report.summaries {
        println!(
            "n={:>6}: error {:.4} (se {:.4}), eps_n {:.4}, mean max K {:.1}, mass above {:.1}: {:.3}",
            s.n, s.mean_error, s.se_error, s.epsilon, s.mean_max_leaves, s.size_bound, s.mass_above
        );
    }
    match report.slope {
        Some(slope) => println!("fitted slope {slope:.3}, theoretical {:.3}", report.theoretical_slope),
        None => println!("fitted slope unavailable, theoretical {:.3}", report.theoretical_slope),
    }
    if !report.errors_non_increasing {
        println!("note: mean error increased by more than one standard error along the grid");
    }
}
