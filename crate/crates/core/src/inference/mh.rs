//! Metropolis-Hastings updates for the kernel parameters.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::PriorSpec;
use crate::dag::RadialDag;
use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::precision::{build_sparse_factor, SparseFactor};

/// Result of one kernel-parameter update.
#[derive(Debug, Clone)]
pub struct MhOutcome {
    pub theta: [f64; 2],
    pub accepted: bool,
    /// The proposal fell outside the prior support or its factor could not
    /// be built; it was rejected without evaluating the likelihood.
    pub rejected_outright: bool,
    /// Factor under the proposal, present when it was accepted.
    pub factor: Option<SparseFactor>,
    /// Log density of the latent values under the returned parameters.
    pub loglik: f64,
}

/// Accept with probability `min(1, exp(log_ratio))`.
pub(crate) fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// One random-walk update of the kernel variance and range on the log scale,
/// targeting `p(z | theta) p(theta)`. The `theta' / theta` Jacobian of the
/// log transform enters the acceptance ratio.
#[allow(clippy::too_many_arguments)]
pub fn mh_step_theta<R: Rng + ?Sized>(
    kernel: &KernelSpec,
    loglik: f64,
    z: &[f64],
    dag: &RadialDag,
    prior: &PriorSpec,
    scale: f64,
    jitter: f64,
    rng: &mut R,
) -> Result<MhOutcome> {
    let theta = kernel.theta();
    let mut proposal = theta;
    for v in proposal.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v *= (scale * e).exp();
    }
    let reject = |outright: bool| MhOutcome {
        theta,
        accepted: false,
        rejected_outright: outright,
        factor: None,
        loglik,
    };
    if proposal == theta {
        return Ok(MhOutcome {
            theta,
            accepted: true,
            rejected_outright: false,
            factor: None,
            loglik,
        });
    }
    let lp_new = prior.ln_theta(proposal);
    if lp_new == f64::NEG_INFINITY {
        return Ok(reject(true));
    }
    let Ok(k_new) = kernel.with_theta(proposal) else {
        return Ok(reject(true));
    };
    let factor = match build_sparse_factor(dag, &k_new, jitter) {
        Ok(f) => f,
        Err(e) => {
            debug!("proposal {proposal:?} rejected: {e}");
            return Ok(reject(true));
        }
    };
    let ll_new = factor.log_density(z)?;
    let log_ratio = ll_new - loglik + lp_new - prior.ln_theta(theta)
        + (proposal[0] / theta[0]).ln()
        + (proposal[1] / theta[1]).ln();
    if accept(log_ratio, rng) {
        Ok(MhOutcome {
            theta: proposal,
            accepted: true,
            rejected_outright: false,
            factor: Some(factor),
            loglik: ll_new,
        })
    } else {
        Ok(reject(false))
    }
}

/// Random-walk proposal whose shape `S` adapts so that the acceptance rate
/// approaches a target: after each step with acceptance probability `alpha`,
/// `S S^T <- S (I + eta (alpha - target) u u^T / |u|^2) S^T` with
/// `eta = min(1, d n^{-2/3})`.
#[derive(Debug, Clone)]
pub struct RobustAdaptiveMetropolis {
    s: DMatrix<f64>,
    target: f64,
    step: usize,
    adapting: bool,
}

impl RobustAdaptiveMetropolis {
    pub fn new(dim: usize, initial_scale: f64, target: f64) -> Self {
        RobustAdaptiveMetropolis {
            s: DMatrix::identity(dim, dim) * initial_scale,
            target,
            step: 0,
            adapting: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn freeze(&mut self) {
        self.adapting = false;
    }

    pub fn is_adapting(&self) -> bool {
        self.adapting
    }

    /// Returns the proposal `x + S u` and the standard-normal `u`.
    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> (Vec<f64>, DVector<f64>) {
        let d = self.dim();
        let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.s * &u;
        ((0..d).map(|i| x[i] + step[i]).collect(), u)
    }

    pub fn adapt(&mut self, u: &DVector<f64>, alpha: f64) {
        if !self.adapting {
            return;
        }
        self.step += 1;
        let norm2 = u.norm_squared();
        if norm2 == 0.0 || !alpha.is_finite() {
            return;
        }
        let d = self.dim() as f64;
        let eta = (d * (self.step as f64).powf(-2.0 / 3.0)).min(1.0);
        let m = DMatrix::identity(self.dim(), self.dim()) + u * u.transpose() * (eta * (alpha - self.target) / norm2);
        let cov = &self.s * m * self.s.transpose();
        if let Some(ch) = cov.cholesky() {
            self.s = ch.l();
        }
    }
}
