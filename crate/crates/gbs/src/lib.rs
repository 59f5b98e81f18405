//! Evidence estimation for black-box posteriors.
//!
//! The crate samples a posterior with a gradient-based MCMC kernel, fits an
//! invertible Gaussianizing transform to the draws, and combines the two
//! distributions with bridge sampling to estimate the normalizing constant
//! together with an honest error bar. Classic importance sampling, harmonic
//! mean, warp bridge, and annealed importance sampling estimators are
//! included for comparison, along with the benchmark target suite used by
//! the command line interface.

pub mod annealing;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod flow;
pub mod linalg;
pub mod protocol;
pub mod rng;
pub mod sampler;
pub mod targets;

pub use density::{BoxPriorTarget, EvalLedger, LogDensity};
pub use error::{Error, Result};
pub use estimators::{EvidenceEstimate, Method};
