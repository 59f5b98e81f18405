//! Command line driver for the evidence estimation benchmarks.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use config::{parse_seeds, ResolvedRun, RunConfig};
use gbs::targets::TargetDistribution;
use gbs::Method;

const USAGE_HINT: &str = "run `gbs <command> --help` for usage";

#[derive(Parser)]
#[command(
    name = "gbs",
    version,
    about = "Evidence estimation benchmarks on box-prior targets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one estimator on one target over a list of seeds.
    Run(RunArgs),
    /// Run several configurations and merge their replication summaries.
    Compare(CompareArgs),
    /// List the built-in benchmark targets.
    ListTargets(ListArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target name, e.g. funnel16.
    #[arg(long)]
    target: Option<String>,
    /// Estimator tag: gbs, gbsl, gis, ghm, wbs, ais or rais.
    #[arg(long)]
    estimator: Option<String>,
    /// Seed list: "0..7" (inclusive), "0,2,5", or a single integer.
    #[arg(long)]
    seeds: Option<String>,
    /// Use seeds 0..N-1 when --seeds is not given (default 8, full runs 64).
    #[arg(long)]
    replications: Option<usize>,
    /// Directory for records, summary and metadata (default: runs).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// JSON config file; repeat the flag for each configuration.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    /// Target for the --estimators shorthand.
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated estimator tags, each compared on --target.
    #[arg(long)]
    estimators: Option<String>,
    /// Seed list shared by every configuration.
    #[arg(long)]
    seeds: Option<String>,
    /// Shared replication count when --seeds is not given.
    #[arg(long)]
    replications: Option<usize>,
    /// Directory for all records and the merged comparison (default: runs).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ListArgs {
    /// Emit machine-readable descriptors, banana rotation rows included.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = init_workers() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match Cli::parse().command {
        Command::Run(args) => run_command(args),
        Command::Compare(args) => compare_command(args),
        Command::ListTargets(args) => list_targets(args),
    }
}

/// `GBS_WORKERS` bounds the sampling thread pool; unset means one worker per
/// core.
fn init_workers() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("GBS_WORKERS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .context("GBS_WORKERS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

fn parse_method(tag: &str) -> anyhow::Result<Method> {
    tag.parse::<Method>().map_err(|_| {
        anyhow::anyhow!("unknown estimator '{tag}' (expected one of: gbs, gbsl, gis, ghm, wbs, ais, rais)")
    })
}

fn flags_to_config(
    target: Option<String>,
    estimator: Option<String>,
    seeds: Option<String>,
    replications: Option<usize>,
    output: Option<PathBuf>,
) -> anyhow::Result<RunConfig> {
    let estimator = estimator.as_deref().map(parse_method).transpose()?;
    let seeds = seeds.as_deref().map(parse_seeds).transpose()?;
    Ok(RunConfig {
        target,
        estimator,
        seeds,
        replications,
        output,
        ..RunConfig::default()
    })
}

fn run_command(args: RunArgs) -> ExitCode {
    let plan = match prepare_run(&args) {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("{USAGE_HINT}");
            return ExitCode::from(2);
        }
    };
    match execute_plan(&plan, true) {
        Ok(clean) => {
            if clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn prepare_run(args: &RunArgs) -> anyhow::Result<ResolvedRun> {
    let base = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let flags = flags_to_config(
        args.target.clone(),
        args.estimator.clone(),
        args.seeds.clone(),
        args.replications,
        args.output.clone(),
    )?;
    base.merged_with(&flags).resolve()
}

/// Run every seed, write records, summary and metadata. Returns whether all
/// seeds succeeded; failed seeds leave failure records behind.
fn execute_plan(plan: &ResolvedRun, print_table: bool) -> anyhow::Result<bool> {
    std::fs::create_dir_all(&plan.output)
        .with_context(|| format!("creating {}", plan.output.display()))?;
    let (records, durations) = report::run_plan(plan);
    report::write_records(&plan.output, &records)?;
    let row = report::aggregate(&records, plan.target.fiducial_ln_z());
    let stem = format!("{}_{}", plan.target.name(), plan.method.name());
    report::write_summary_csv(&plan.output.join(format!("{stem}_summary.csv")), std::slice::from_ref(&row))?;
    report::write_meta(&plan.output.join(format!("{stem}_meta.json")), durations)?;
    if print_table {
        report::print_aggregate_table(std::slice::from_ref(&row));
    }
    Ok(records.iter().all(|r| r.error.is_none()))
}

fn compare_command(args: CompareArgs) -> ExitCode {
    let plans = match prepare_compare(&args) {
        Ok(plans) => plans,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("{USAGE_HINT}");
            return ExitCode::from(2);
        }
    };
    match execute_compare(&plans) {
        Ok(clean) => {
            if clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn prepare_compare(args: &CompareArgs) -> anyhow::Result<Vec<ResolvedRun>> {
    let mut shared = flags_to_config(
        args.target.clone(),
        None,
        args.seeds.clone(),
        args.replications,
        args.output.clone(),
    )?;
    shared.output = Some(args.output.clone().unwrap_or_else(|| PathBuf::from("runs")));

    let mut configs = Vec::new();
    for path in &args.configs {
        configs.push(RunConfig::from_file(path)?);
    }
    if let Some(tags) = &args.estimators {
        anyhow::ensure!(
            args.target.is_some(),
            "--estimators needs --target to name the common target"
        );
        for tag in tags.split(',') {
            configs.push(RunConfig {
                estimator: Some(parse_method(tag.trim())?),
                ..RunConfig::default()
            });
        }
    }
    anyhow::ensure!(
        !configs.is_empty(),
        "compare needs at least one configuration (--config, or --target with --estimators)"
    );
    configs
        .into_iter()
        .map(|c| c.merged_with(&shared).resolve())
        .collect()
}

fn execute_compare(plans: &[ResolvedRun]) -> anyhow::Result<bool> {
    let out_dir = plans[0].output.clone();
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut rows = Vec::with_capacity(plans.len());
    let mut durations = std::collections::BTreeMap::new();
    let mut clean = true;
    for plan in plans {
        let (records, d) = report::run_plan(plan);
        report::write_records(&plan.output, &records)?;
        clean &= records.iter().all(|r| r.error.is_none());
        rows.push(report::aggregate(&records, plan.target.fiducial_ln_z()));
        durations.extend(d);
    }
    rows.sort_by_key(|r| {
        (
            r.target.clone(),
            Method::ALL.iter().position(|m| *m == r.method),
        )
    });
    report::write_summary_csv(&out_dir.join("comparison.csv"), &rows)?;
    report::write_meta(&out_dir.join("comparison_meta.json"), durations)?;
    report::print_aggregate_table(&rows);
    Ok(clean)
}

fn list_targets(args: ListArgs) -> ExitCode {
    let descriptors: Vec<_> = TargetDistribution::standard_names()
        .iter()
        .map(|name| {
            TargetDistribution::by_name(name)
                .expect("standard target")
                .descriptor()
        })
        .collect();
    if args.json {
        match serde_json::to_string_pretty(&descriptors) {
            Ok(text) => println!("{text}"),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    } else {
        for d in &descriptors {
            let fiducial = d
                .fiducial_ln_z
                .map(|f| f.to_string())
                .unwrap_or_else(|| "-".into());
            println!("{:<10} dim {:>3}   fiducial ln Z {fiducial}", d.name, d.dim);
        }
    }
    ExitCode::SUCCESS
}
