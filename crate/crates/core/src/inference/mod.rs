//! Posterior sampling for the spatial regression model
//! `Y(s) = X(s) beta + Z(s) + eps(s)`.
//!
//! Two samplers are provided: a Gibbs sampler over the latent effects
//! ([`run_latent_mcmc`]) and a sampler with the latent effects integrated out
//! ([`run_response_mcmc`]).

mod cg;
mod conjugate;
mod draws;
mod init;
mod latent;
mod mh;
mod posthoc;
mod response;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::LocationSet;

pub use cg::{pcg_solve, sample_latent_cg, CgConfig, CgOutcome, Preconditioner};
pub use conjugate::{sample_beta, sample_beta_response, sample_sigma2};
pub use draws::{AcceptanceStats, ModelKind, PosteriorDraws, PredictionDraw};
pub use init::variogram_initial_theta;
pub use latent::{loglik_latent_given_theta, run_latent_mcmc, LatentState};
pub use mh::{mh_step_theta, MhOutcome, RobustAdaptiveMetropolis};
pub use posthoc::predict_from_draws;
pub use response::{marginal_loglik, run_response_mcmc};

/// Training data: covariates (`n x p`, possibly zero columns), responses and
/// locations.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub locations: LocationSet,
}

impl RegressionData {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, locations: LocationSet) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || locations.len() != n {
            return Err(Error::InvalidData(format!(
                "row counts disagree: X has {}, Y has {n}, locations {}",
                x.nrows(),
                locations.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("response {i} is not finite")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("covariates contain non-finite values".into()));
        }
        Ok(RegressionData { x, y, locations })
    }

    /// Data without covariates.
    pub fn without_covariates(y: Vec<f64>, locations: LocationSet) -> Result<Self> {
        let n = y.len();
        Self::new(DMatrix::zeros(n, 0), y, locations)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Test locations and their covariates (`m x p`).
#[derive(Debug, Clone)]
pub struct TestData {
    pub x: DMatrix<f64>,
    pub locations: LocationSet,
}

impl TestData {
    pub fn new(x: DMatrix<f64>, locations: LocationSet) -> Result<Self> {
        if x.nrows() != locations.len() {
            return Err(Error::InvalidData(format!(
                "test covariates have {} rows for {} locations",
                x.nrows(),
                locations.len()
            )));
        }
        Ok(TestData { x, locations })
    }

    pub fn without_covariates(locations: LocationSet) -> Self {
        TestData {
            x: DMatrix::zeros(locations.len(), 0),
            locations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BetaPrior {
    /// Improper flat prior.
    Flat,
    /// `N(mean, precision^{-1})`
    Normal { mean: Vec<f64>, precision: DMatrix<f64> },
}

/// `IG(shape, scale)`, density proportional to `x^{-shape-1} exp(-scale/x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGamma {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(Error::InvalidPrior(format!(
                "inverse gamma needs positive shape and scale, got ({shape}, {scale})"
            )));
        }
        Ok(InverseGamma { shape, scale })
    }

    /// Unnormalized log density.
    pub fn ln_density(&self, x: f64) -> f64 {
        -(self.shape + 1.0) * x.ln() - self.scale / x
    }

    /// Mean when it exists, otherwise the mode.
    pub fn center(&self) -> f64 {
        if self.shape > 1.0 {
            self.scale / (self.shape - 1.0)
        } else {
            self.scale / (self.shape + 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaDensity {
    Flat,
    InverseGamma(InverseGamma),
}

/// Prior on one kernel parameter, restricted to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPrior {
    pub density: ThetaDensity,
    pub min: f64,
    pub max: f64,
}

impl ThetaPrior {
    pub fn flat(min: f64, max: f64) -> Result<Self> {
        Self::new(ThetaDensity::Flat, min, max)
    }

    pub fn inverse_gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::new(
            ThetaDensity::InverseGamma(InverseGamma::new(shape, scale)?),
            0.0,
            f64::INFINITY,
        )
    }

    pub fn new(density: ThetaDensity, min: f64, max: f64) -> Result<Self> {
        if !(min >= 0.0 && max > min) {
            return Err(Error::InvalidPrior(format!("empty support [{min}, {max}]")));
        }
        if density == ThetaDensity::Flat && !max.is_finite() {
            return Err(Error::InvalidPrior(
                "a flat prior needs a finite upper bound".into(),
            ));
        }
        Ok(ThetaPrior { density, min, max })
    }

    pub fn contains(&self, v: f64) -> bool {
        v > 0.0 && v >= self.min && v <= self.max && v.is_finite()
    }

    /// Unnormalized log density; `-inf` outside the support.
    pub fn ln_density(&self, v: f64) -> f64 {
        if !self.contains(v) {
            return f64::NEG_INFINITY;
        }
        match self.density {
            ThetaDensity::Flat => 0.0,
            ThetaDensity::InverseGamma(ig) => ig.ln_density(v),
        }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        let lo = if self.min > 0.0 { self.min } else { f64::MIN_POSITIVE };
        v.clamp(lo, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub beta: BetaPrior,
    pub sigma2: InverseGamma,
    /// Priors on the kernel variance and range parameters.
    pub theta: [ThetaPrior; 2],
}

impl PriorSpec {
    /// Flat prior on the range in `[1, 100]`, `IG(2, 1)` on the spatial
    /// variance and `IG(2, 0.01)` on the nugget.
    pub fn simulation_default() -> Self {
        PriorSpec {
            beta: BetaPrior::Flat,
            sigma2: InverseGamma {
                shape: 2.0,
                scale: 0.01,
            },
            theta: [
                ThetaPrior {
                    density: ThetaDensity::InverseGamma(InverseGamma {
                        shape: 2.0,
                        scale: 1.0,
                    }),
                    min: 0.0,
                    max: f64::INFINITY,
                },
                ThetaPrior {
                    density: ThetaDensity::Flat,
                    min: 1.0,
                    max: 100.0,
                },
            ],
        }
    }

    pub fn ln_theta(&self, theta: [f64; 2]) -> f64 {
        self.theta[0].ln_density(theta[0]) + self.theta[1].ln_density(theta[1])
    }

    pub(crate) fn check(&self, p: usize) -> Result<()> {
        if let BetaPrior::Normal { mean, precision } = &self.beta {
            if mean.len() != p || precision.nrows() != p || precision.ncols() != p {
                return Err(Error::InvalidPrior(format!(
                    "beta prior has dimension {} but X has {p} columns",
                    mean.len()
                )));
            }
        }
        Ok(())
    }
}

/// Settings shared by both samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    /// Total iterations.
    pub l1: usize,
    /// First iteration (1-based) whose predictions and latent values are kept.
    pub l2: usize,
    pub seed: u64,
    pub partition_seed: u64,
    pub jitter: f64,
    pub cg: CgConfig,
    /// Step size of the log-scale random walk for the kernel parameters in
    /// the latent sampler.
    pub proposal_scale: f64,
    /// Initial per-coordinate scale of the adaptive proposal in the response
    /// sampler.
    pub adaptive_initial_scale: f64,
    pub adapt: bool,
    pub target_acceptance: f64,
    pub theta_init: Option<[f64; 2]>,
    pub sigma2_init: Option<f64>,
    pub fix_theta: bool,
    pub fix_sigma2: bool,
    /// Keep latent training values for iterations `>= l2`.
    pub store_latent: bool,
    /// Keep every `thin`-th retained iteration.
    pub thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            l1: 2000,
            l2: 1001,
            seed: 1,
            partition_seed: crate::partition::DEFAULT_PARTITION_SEED,
            jitter: 0.0,
            cg: CgConfig::default(),
            proposal_scale: 0.1,
            adaptive_initial_scale: 0.1,
            adapt: true,
            target_acceptance: 0.24,
            theta_init: None,
            sigma2_init: None,
            fix_theta: false,
            fix_sigma2: false,
            store_latent: false,
            thin: 1,
        }
    }
}

impl McmcConfig {
    pub(crate) fn check(&self) -> Result<()> {
        if self.l1 == 0 {
            return Err(Error::InvalidConfig("l1 must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if !(self.proposal_scale >= 0.0 && self.adaptive_initial_scale >= 0.0) {
            return Err(Error::InvalidConfig("proposal scales must be nonnegative".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.l2 && (iteration - self.l2) % self.thin == 0
    }
}

/// Rows of `m` in the given order.
pub(crate) fn permute_rows(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(order.len(), m.ncols(), |i, j| m[(order[i], j)])
}
