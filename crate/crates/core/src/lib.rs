//! Radial neighbors Gaussian process approximations.
//!
//! Locations are split into an alternating partition whose subsets are
//! `rho`-separated, every pair closer than `rho` is joined in a DAG, and the
//! DAG gives a sparse Cholesky-type factor of the precision matrix. On top of
//! that sit Bayesian spatial regression samplers, joint prediction at new
//! locations, and Wasserstein diagnostics.

pub mod dag;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod partition;
pub mod precision;
pub mod predict;
pub mod simulate;

pub use dag::{build_dag, RadialDag};
pub use error::{Error, Result};
pub use geometry::{LocationSet, RadiusIndex};
pub use inference::{
    predict_from_draws, run_latent_mcmc, run_response_mcmc, McmcConfig, PosteriorDraws, PriorSpec, RegressionData,
    TestData,
};
pub use kernels::{cov_matrix, cov_matrix_sym, recommend_radius, Family, KernelSpec};
pub use partition::{extend_partition, validate_partition, AlternatingPartition};
pub use precision::{
    build_exact_factor, build_sparse_factor, build_sparse_factor_with_nugget,
    dense_radgp_covariance, SparseFactor,
};
pub use predict::{build_prediction_plan, sample_prediction, PredictionPlan};
