//! False-discovery-rate controlled feature selection for generalized linear
//! models using mirror statistics.
//!
//! Features are 0-based throughout the library; reports written by the CLI
//! are 1-based.

pub mod baselines;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod mirror;
pub mod model;
pub mod par;
pub mod rng;

pub use error::{FdrError, Result};
pub use model::{fdp_power, loss_eval, Dataset, FChoice, GlmFamily, MirrorConfig, MirrorResult};
