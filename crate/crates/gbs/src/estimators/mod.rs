//! Evidence estimators: the optimal bridge core, the warp variant, and the
//! full sampling-to-estimate pipelines.

mod bridge;
mod pipeline;
mod warp;

pub use bridge::{
    adaptive_nq, harmonic_mean, importance_sampling, obs_error, obs_error_terms, obs_solve,
    BridgeInputs,
};
pub use pipeline::{gbs, gbsl, ghm, gis, wbs, PipelineConfig};
pub use warp::warp_bridge;

use serde::{Deserialize, Serialize};

use crate::density::EvalLedger;

/// Estimator family tags, also used as command line names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gbs,
    Gbsl,
    Gis,
    Ghm,
    Wbs,
    Ais,
    Rais,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Gbs,
        Method::Gbsl,
        Method::Gis,
        Method::Ghm,
        Method::Wbs,
        Method::Ais,
        Method::Rais,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gbs => "gbs",
            Method::Gbsl => "gbsl",
            Method::Gis => "gis",
            Method::Ghm => "ghm",
            Method::Wbs => "wbs",
            Method::Ais => "ais",
            Method::Rais => "rais",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method '{s}'; expected one of {}", names.join(", "))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One evidence estimate with its error model and cost accounting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub method: Method,
    #[serde(rename = "ln_Z")]
    pub ln_z: f64,
    /// Standard error of the log evidence.
    pub std_err: f64,
    /// Posterior draws consumed by the estimator itself.
    pub n_p: usize,
    /// Auxiliary draws consumed by the estimator itself.
    pub n_q: usize,
    /// Autocorrelation time of the posterior-side integrand, when one enters
    /// the error model.
    pub tau_f2: Option<f64>,
    /// Target density evaluations across every stage, sampling included.
    pub evals: EvalLedger,
}

/// Split of the evaluation and error budget for auxiliary draws.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AllocationPolicy {
    /// Fraction of the squared error budget granted to the auxiliary term.
    pub f_err: f64,
    /// Fraction of all density evaluations granted to auxiliary draws.
    pub f_eva: f64,
}

impl Default for AllocationPolicy {
    fn default() -> Self {
        Self {
            f_err: 0.1,
            f_eva: 0.1,
        }
    }
}
