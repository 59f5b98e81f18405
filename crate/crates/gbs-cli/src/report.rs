//! Run execution, per-run JSON records, and the replication summary.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

use gbs::annealing::{self, AnnealingRun};
use gbs::estimators;
use gbs::{EvidenceEstimate, Method};

use crate::config::ResolvedRun;

/// One seed's outcome, written as a standalone JSON record. Records carry no
/// timing so reruns of the same config produce byte-identical files; wall
/// clock data goes to the separate metadata file.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub target: String,
    pub method: Method,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EvidenceEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annealing: Option<AnnealingRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn file_stem(&self) -> String {
        format!("{}_{}_seed{}", self.target, self.method.name(), self.seed)
    }
}

fn execute_seed(plan: &ResolvedRun, seed: u64) -> RunRecord {
    let target = &plan.target;
    let outcome = match plan.method {
        Method::Gbs => estimators::gbs(target, &plan.pipeline, seed).map(|e| (e, None)),
        Method::Gbsl => estimators::gbsl(target, &plan.pipeline, seed).map(|e| (e, None)),
        Method::Gis => estimators::gis(target, &plan.pipeline, seed).map(|e| (e, None)),
        Method::Ghm => estimators::ghm(target, &plan.pipeline, seed).map(|e| (e, None)),
        Method::Wbs => estimators::wbs(target, &plan.pipeline, seed).map(|e| (e, None)),
        Method::Ais | Method::Rais => {
            let cfg = plan.anneal.as_ref().expect("resolved annealing config");
            let schedule = plan.schedule.as_ref().expect("resolved schedule");
            let run = if plan.method == Method::Ais {
                annealing::ais(target, schedule, cfg, seed)
            } else {
                annealing::rais(target, schedule, cfg, seed)
            };
            run.map(|(e, r)| (e, Some(r)))
        }
    };
    let (estimate, annealing, error) = match outcome {
        Ok((e, a)) => (Some(e), a, None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    RunRecord {
        target: target.name(),
        method: plan.method,
        seed,
        estimate,
        annealing,
        error,
    }
}

/// Execute every seed of a plan sequentially, printing one line per run.
/// Returns the records plus per-record wall clock seconds.
pub fn run_plan(plan: &ResolvedRun) -> (Vec<RunRecord>, BTreeMap<String, f64>) {
    let mut records = Vec::with_capacity(plan.seeds.len());
    let mut durations = BTreeMap::new();
    for &seed in &plan.seeds {
        let clock = Instant::now();
        let record = execute_seed(plan, seed);
        durations.insert(record.file_stem(), clock.elapsed().as_secs_f64());
        print_run_line(&record);
        records.push(record);
    }
    (records, durations)
}

fn print_run_line(record: &RunRecord) {
    match (&record.estimate, &record.error) {
        (Some(est), _) => println!(
            "{} {} seed {}: ln Z = {:.4} +/- {:.4} ({} likelihood, {} gradient evals)",
            record.method.name(),
            record.target,
            record.seed,
            est.ln_z,
            est.std_err,
            est.evals.likelihood,
            est.evals.gradient,
        ),
        (None, Some(err)) => println!(
            "{} {} seed {}: FAILED ({err})",
            record.method.name(),
            record.target,
            record.seed,
        ),
        (None, None) => unreachable!("record has neither estimate nor error"),
    }
}

/// Replication summary of one (target, method) cell. Quantiles are of the
/// error `ln Z - fiducial` when a reference value exists, of raw `ln Z`
/// otherwise; coverage counts runs whose reported interval `+/- 1.96 sigma`
/// contains the reference.
#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub target: String,
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub fiducial_ln_z: Option<f64>,
    pub err_quantiles: [f64; 5],
    pub mean_std_err: f64,
    pub empirical_std: f64,
    pub coverage: Option<f64>,
    pub mean_likelihood_evals: f64,
    pub mean_gradient_evals: f64,
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn aggregate(records: &[RunRecord], fiducial: Option<f64>) -> Aggregate {
    let first = records.first().expect("at least one record");
    let successes: Vec<&EvidenceEstimate> =
        records.iter().filter_map(|r| r.estimate.as_ref()).collect();

    let mut errors: Vec<f64> = successes
        .iter()
        .map(|e| e.ln_z - fiducial.unwrap_or(0.0))
        .collect();
    errors.sort_by(|a, b| a.total_cmp(b));
    let err_quantiles = [0.05, 0.25, 0.50, 0.75, 0.95].map(|p| quantile(&errors, p));

    let n = successes.len() as f64;
    let mean_of = |f: &dyn Fn(&EvidenceEstimate) -> f64| -> f64 {
        if successes.is_empty() {
            f64::NAN
        } else {
            successes.iter().map(|e| f(e)).sum::<f64>() / n
        }
    };
    let mean_ln_z = mean_of(&|e| e.ln_z);
    let empirical_std = if successes.len() < 2 {
        f64::NAN
    } else {
        (successes
            .iter()
            .map(|e| (e.ln_z - mean_ln_z).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    };
    let coverage = fiducial.map(|truth| {
        if successes.is_empty() {
            f64::NAN
        } else {
            successes
                .iter()
                .filter(|e| (e.ln_z - truth).abs() <= 1.96 * e.std_err)
                .count() as f64
                / n
        }
    });

    Aggregate {
        target: first.target.clone(),
        method: first.method,
        runs: records.len(),
        failures: records.len() - successes.len(),
        fiducial_ln_z: fiducial,
        err_quantiles,
        mean_std_err: mean_of(&|e| e.std_err),
        empirical_std,
        coverage,
        mean_likelihood_evals: mean_of(&|e| e.evals.likelihood as f64),
        mean_gradient_evals: mean_of(&|e| e.evals.gradient as f64),
    }
}

pub const CSV_HEADER: &str = "target,method,runs,failures,fiducial_ln_z,\
err_q05,err_q25,err_q50,err_q75,err_q95,mean_std_err,empirical_std,coverage,\
mean_likelihood_evals,mean_gradient_evals";

impl Aggregate {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let q = self.err_quantiles;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.target,
            self.method.name(),
            self.runs,
            self.failures,
            opt(self.fiducial_ln_z),
            q[0],
            q[1],
            q[2],
            q[3],
            q[4],
            self.mean_std_err,
            self.empirical_std,
            opt(self.coverage),
            self.mean_likelihood_evals,
            self.mean_gradient_evals,
        )
    }
}

pub fn write_summary_csv(path: &Path, rows: &[Aggregate]) -> anyhow::Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.csv_row());
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_records(dir: &Path, records: &[RunRecord]) -> anyhow::Result<()> {
    for record in records {
        let path = dir.join(format!("{}.json", record.file_stem()));
        let mut text = serde_json::to_string_pretty(record)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Everything volatile about an invocation: wall clock times and tool
/// version. Kept apart from the records so those stay reproducible.
#[derive(Debug, Serialize)]
pub struct Meta {
    pub created_unix: u64,
    pub tool_version: &'static str,
    pub duration_seconds: BTreeMap<String, f64>,
}

pub fn write_meta(path: &Path, duration_seconds: BTreeMap<String, f64>) -> anyhow::Result<()> {
    let meta = Meta {
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        tool_version: env!("CARGO_PKG_VERSION"),
        duration_seconds,
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn print_aggregate_table(rows: &[Aggregate]) {
    println!(
        "{:<10} {:<6} {:>5} {:>5} {:>10} {:>10} {:>9} {:>14} {:>14}",
        "target", "method", "runs", "fail", "median_err", "mean_se", "coverage", "mean_L_evals", "mean_G_evals"
    );
    for row in rows {
        println!(
            "{:<10} {:<6} {:>5} {:>5} {:>10.4} {:>10.4} {:>9} {:>14.0} {:>14.0}",
            row.target,
            row.method.name(),
            row.runs,
            row.failures,
            row.err_quantiles[2],
            row.mean_std_err,
            row.coverage
                .map(|c| format!("{c:.2}"))
                .unwrap_or_else(|| "-".into()),
            row.mean_likelihood_evals,
            row.mean_gradient_evals,
        );
    }
}
