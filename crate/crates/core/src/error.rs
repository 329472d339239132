use thiserror::Error;

pub type Result<T> = std::result::Result<T, FdrError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdrError {
    #[error("response value {y} is outside the support of the {family} family")]
    Domain { family: &'static str, y: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mle_nonexistent: iterates diverged or failed to converge after {iterations} iterations (|beta| = {norm:.3e})")]
    MleNonexistent { iterations: usize, norm: f64 },

    #[error("singular_hessian: weighted Gram matrix is numerically singular")]
    SingularHessian,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("rank-deficient design: feature {feature} is (nearly) collinear with the remaining columns")]
    RankDeficient { feature: usize },

    #[error("tau_nonpositive: node-wise residual variance for feature {feature} is {value:.3e}")]
    TauNonpositive { feature: usize, value: f64 },

    #[error("debiased standard error for feature {feature} is non-positive ({value:.3e})")]
    SigmaNonpositive { feature: usize, value: f64 },

    #[error("insufficient_samples: split size {half} must exceed p = {p}")]
    InsufficientSamples { half: usize, p: usize },

    #[error("p = {p} is not divisible into {blocks} blocks")]
    IndivisibleBlocks { p: usize, blocks: usize },
}

impl FdrError {
    /// Short machine-readable tag, used in skipped-replication reports.
    pub fn tag(&self) -> &'static str {
        match self {
            FdrError::Domain { .. } => "domain",
            FdrError::InvalidInput(_) => "invalid_input",
            FdrError::MleNonexistent { .. } => "mle_nonexistent",
            FdrError::SingularHessian => "singular_hessian",
            FdrError::NotPositiveDefinite(_) => "not_positive_definite",
            FdrError::RankDeficient { .. } => "rank_deficient",
            FdrError::TauNonpositive { .. } => "tau_nonpositive",
            FdrError::SigmaNonpositive { .. } => "sigma_nonpositive",
            FdrError::InsufficientSamples { .. } => "insufficient_samples",
            FdrError::IndivisibleBlocks { .. } => "indivisible_blocks",
        }
    }
}
