//! Reference run configurations for the standard benchmark targets.
//!
//! These are the settings the benchmark comparison was produced with, kept in
//! one place so the command line tool and the test suites agree on them. The
//! bridge-family pipelines share one sampling budget per target; annealing
//! ladders are tuned per target and direction so both runs land in a
//! comparable evaluation budget.

use crate::annealing::{make_schedule, AnnealConfig, AnnealSchedule, Direction};
use crate::estimators::PipelineConfig;
use crate::targets::TargetDistribution;

/// Sharpness of the reference temperature ladders.
pub const ANNEAL_DELTA: f64 = 4.0;

/// Pipeline settings for the bridge-family estimators on a benchmark target:
/// eight chains with a 20% warm-up and a ten-layer flow, at 2500 iterations
/// per chain for the funnel and banana families and 5000 for the heavier
/// Cauchy and ring families.
pub fn reference_pipeline(target: &TargetDistribution) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.sampler.n_iters = match target.family() {
        "cauchy" | "ring" => 5000,
        _ => 2500,
    };
    cfg
}

/// Ladder length for the reference annealing runs.
pub fn reference_temperatures(target: &TargetDistribution, direction: Direction) -> usize {
    match (target.family(), direction) {
        ("funnel", Direction::Forward) => 800,
        ("funnel", Direction::Reverse) => 700,
        ("banana", Direction::Forward) => 2000,
        ("banana", Direction::Reverse) => 1500,
        ("cauchy", Direction::Forward) => 3000,
        ("cauchy", Direction::Reverse) => 2500,
        (_, Direction::Forward) => 3500,
        (_, Direction::Reverse) => 3000,
    }
}

/// Chain count and warm-up for the reference annealing runs.
pub fn reference_anneal_config() -> AnnealConfig {
    AnnealConfig::default()
}

/// The full annealing setup for a benchmark target and direction.
pub fn reference_anneal(
    target: &TargetDistribution,
    direction: Direction,
) -> (AnnealConfig, AnnealSchedule) {
    let t = reference_temperatures(target, direction);
    let schedule = make_schedule(t, ANNEAL_DELTA).expect("reference ladder is valid");
    (reference_anneal_config(), schedule)
}
