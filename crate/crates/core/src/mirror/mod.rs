//! Mirror statistics, the FDP cutoff and the selectors built on them.

pub mod high;
pub mod mds;
pub mod moderate;
pub mod split;
pub mod stats;

pub use high::{ds_high_glm, ds_high_linear, node_lambdas, LambdaRules};
pub use mds::{inclusion_rates, mds, mds_select, BaseSelector, InclusionRates, MdsOptions, DEFAULT_SPLITS};
pub use moderate::{ds_moderate, gm_moderate, GaussianMirrorAugment, ModerateOptions};
pub use split::{random_split, SplitPair};
pub use stats::{fdp_cutoff, mirror_statistics, select};
