//! Run configuration: the JSON document, command line overrides, and the
//! merge of the two into a fully resolved run.

use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use gbs::annealing::{make_schedule, AnnealConfig, AnnealSchedule};
use gbs::estimators::PipelineConfig;
use gbs::flow::FlowConfig;
use gbs::protocol;
use gbs::sampler::SamplerConfig;
use gbs::targets::TargetDistribution;
use gbs::Method;

/// One benchmark run as written in a config file. Every field is optional so
/// files can stay minimal; command line flags override whatever they name.
/// Unknown fields are rejected.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub target: Option<String>,
    pub estimator: Option<Method>,
    /// Explicit seed list; wins over `replications`.
    pub seeds: Option<Vec<u64>>,
    /// Shorthand for seeds `0..replications`.
    pub replications: Option<usize>,
    pub sampler: Option<SamplerOverrides>,
    pub flow: Option<FlowOverrides>,
    pub allocation: Option<AllocationOverrides>,
    pub schedule: Option<ScheduleOverrides>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerOverrides {
    pub n_chains: Option<usize>,
    pub n_iters: Option<usize>,
    pub warmup_frac: Option<f64>,
    pub target_accept: Option<f64>,
    pub max_tree_depth: Option<usize>,
}

impl SamplerOverrides {
    fn apply(&self, cfg: &mut SamplerConfig) {
        if let Some(v) = self.n_chains {
            cfg.n_chains = v;
        }
        if let Some(v) = self.n_iters {
            cfg.n_iters = v;
        }
        if let Some(v) = self.warmup_frac {
            cfg.warmup_frac = v;
        }
        if let Some(v) = self.target_accept {
            cfg.target_accept = v;
        }
        if let Some(v) = self.max_tree_depth {
            cfg.max_tree_depth = v;
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowOverrides {
    pub n_layers: Option<usize>,
    pub n_knots: Option<usize>,
    pub n_directions: Option<usize>,
    pub bandwidth_factor: Option<f64>,
    pub slope_floor: Option<f64>,
    pub min_samples_per_dim: Option<usize>,
}

impl FlowOverrides {
    fn apply(&self, cfg: &mut FlowConfig) {
        if let Some(v) = self.n_layers {
            cfg.n_layers = v;
        }
        if let Some(v) = self.n_knots {
            cfg.n_knots = v;
        }
        if let Some(v) = self.n_directions {
            cfg.n_directions = v;
        }
        if let Some(v) = self.bandwidth_factor {
            cfg.bandwidth_factor = v;
        }
        if let Some(v) = self.slope_floor {
            cfg.slope_floor = v;
        }
        if let Some(v) = self.min_samples_per_dim {
            cfg.min_samples_per_dim = v;
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocationOverrides {
    pub f_err: Option<f64>,
    pub f_eva: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleOverrides {
    pub temperatures: Option<usize>,
    pub delta: Option<f64>,
    pub chains: Option<usize>,
    pub warmup_iters: Option<usize>,
    pub max_tree_depth: Option<usize>,
    pub target_accept: Option<f64>,
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Overlay `other` (typically command line flags) on top of `self`.
    pub fn merged_with(mut self, other: &RunConfig) -> Self {
        if other.target.is_some() {
            self.target = other.target.clone();
        }
        if other.estimator.is_some() {
            self.estimator = other.estimator;
        }
        if other.seeds.is_some() {
            self.seeds = other.seeds.clone();
        }
        if other.replications.is_some() {
            self.replications = other.replications;
        }
        if other.sampler.is_some() {
            self.sampler = other.sampler.clone();
        }
        if other.flow.is_some() {
            self.flow = other.flow.clone();
        }
        if other.allocation.is_some() {
            self.allocation = other.allocation.clone();
        }
        if other.schedule.is_some() {
            self.schedule = other.schedule.clone();
        }
        if other.output.is_some() {
            self.output = other.output.clone();
        }
        self
    }

    /// Validate and turn into a runnable plan against the reference protocol.
    pub fn resolve(&self) -> anyhow::Result<ResolvedRun> {
        let name = self
            .target
            .as_deref()
            .context("no target given (use --target or the config file)")?;
        let target = TargetDistribution::by_name(name)?;
        let method = self
            .estimator
            .context("no estimator given (use --estimator or the config file)")?;

        let seeds = match (&self.seeds, self.replications) {
            (Some(s), _) if !s.is_empty() => s.clone(),
            (Some(_), _) => bail!("seed list is empty"),
            (None, reps) => (0..reps.unwrap_or(8) as u64).collect(),
        };

        let mut pipeline = protocol::reference_pipeline(&target);
        if let Some(o) = &self.sampler {
            o.apply(&mut pipeline.sampler);
        }
        if let Some(o) = &self.flow {
            o.apply(&mut pipeline.flow);
        }
        if let Some(o) = &self.allocation {
            if let Some(v) = o.f_err {
                pipeline.allocation.f_err = v;
            }
            if let Some(v) = o.f_eva {
                pipeline.allocation.f_eva = v;
            }
        }

        let (anneal, schedule) = match method {
            Method::Ais | Method::Rais => {
                let direction = if method == Method::Ais {
                    gbs::annealing::Direction::Forward
                } else {
                    gbs::annealing::Direction::Reverse
                };
                let (mut cfg, reference) = protocol::reference_anneal(&target, direction);
                let mut temperatures = reference.len();
                let mut delta = reference.delta;
                if let Some(o) = &self.schedule {
                    if let Some(v) = o.temperatures {
                        temperatures = v;
                    }
                    if let Some(v) = o.delta {
                        delta = v;
                    }
                    if let Some(v) = o.chains {
                        cfg.chains = v;
                    }
                    if let Some(v) = o.warmup_iters {
                        cfg.warmup_iters = v;
                    }
                    if let Some(v) = o.max_tree_depth {
                        cfg.max_tree_depth = v;
                    }
                    if let Some(v) = o.target_accept {
                        cfg.target_accept = v;
                    }
                }
                let schedule = make_schedule(temperatures, delta)?;
                (Some(cfg), Some(schedule))
            }
            _ => (None, None),
        };

        Ok(ResolvedRun {
            target,
            method,
            seeds,
            output: self.output.clone().unwrap_or_else(|| PathBuf::from("runs")),
            pipeline,
            anneal,
            schedule,
        })
    }
}

/// A validated plan: concrete target, estimator and settings.
pub struct ResolvedRun {
    pub target: TargetDistribution,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub pipeline: PipelineConfig,
    pub anneal: Option<AnnealConfig>,
    pub schedule: Option<AnnealSchedule>,
}

/// Parse a seed list: `"0..7"` (inclusive range), `"0,2,5"`, or one integer.
pub fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let lo: u64 = a.trim().parse().context("range start")?;
        let hi: u64 = b.trim().parse().context("range end")?;
        if hi < lo {
            bail!("seed range {text} is empty");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed '{}'", s.trim()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_parse() {
        assert_eq!(parse_seeds("0..7").unwrap(), (0..=7).collect::<Vec<_>>());
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("0, 2,5").unwrap(), vec![0, 2, 5]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"targett": "funnel16"}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<RunConfig>(r#"{"sampler": {"chains": 4}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn unknown_estimator_tag_is_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"estimator": "obs"}"#).unwrap_err();
        assert!(err.to_string().contains("gbs"));
    }

    #[test]
    fn flags_override_the_file() {
        let file: RunConfig = serde_json::from_str(
            r#"{"target": "funnel16", "estimator": "gbs", "replications": 4}"#,
        )
        .unwrap();
        let flags = RunConfig {
            estimator: Some(Method::Wbs),
            seeds: Some(vec![9]),
            ..RunConfig::default()
        };
        let merged = file.merged_with(&flags);
        let resolved = merged.resolve().unwrap();
        assert_eq!(resolved.method, Method::Wbs);
        assert_eq!(resolved.seeds, vec![9]);
        assert_eq!(resolved.target.name(), "funnel16");
    }

    #[test]
    fn defaults_follow_the_reference_protocol() {
        let cfg = RunConfig {
            target: Some("cauchy48".into()),
            estimator: Some(Method::Gbs),
            ..RunConfig::default()
        };
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.seeds.len(), 8);
        assert_eq!(resolved.pipeline.sampler.n_iters, 5000);
        assert!(resolved.anneal.is_none());
    }

    #[test]
    fn annealing_runs_resolve_their_ladder() {
        let cfg = RunConfig {
            target: Some("funnel16".into()),
            estimator: Some(Method::Rais),
            schedule: Some(ScheduleOverrides {
                temperatures: Some(50),
                ..ScheduleOverrides::default()
            }),
            ..RunConfig::default()
        };
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.schedule.unwrap().len(), 50);
        assert_eq!(resolved.anneal.unwrap().chains, 16);
    }
}
