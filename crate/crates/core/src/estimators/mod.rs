//! Coefficient and variance estimation.

pub mod debias;
pub mod lambda;
pub mod lasso;
pub mod mle;
pub mod nodewise;

pub use debias::{debias_glm, debias_linear, weighted_design, DebiasedFit};
pub use lambda::{select_lambda, theory_lambda, LambdaRule};
pub use lasso::{fit_lasso, fit_lasso_from, lambda_max, lasso_kkt, LassoFit, LassoOptions};
pub use mle::{fit_mle, MleFit, MleOptions};
pub use nodewise::{
    conditional_variances, node_wise_ols_tau, node_wise_precision, NodewiseOptions, PrecisionEstimate, TauMethod,
};
