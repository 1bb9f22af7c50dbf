//! Closed-form full conditionals.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{BetaPrior, InverseGamma};
use crate::error::{Error, Result};

/// Draw from `N(P^{-1} b, P^{-1})` given the precision `P` and `b`.
fn draw_from_canonical<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    b: DVector<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let chol = precision.cholesky().ok_or(Error::SingularPosterior)?;
    let mean = chol.solve(&b);
    let p = b.len();
    let e = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    // P = L L^T, so L^{-T} e has covariance P^{-1}
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&e)
        .ok_or(Error::SingularPosterior)?;
    Ok((mean + noise).iter().copied().collect())
}

fn prior_terms(prior: &BetaPrior, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    match prior {
        BetaPrior::Flat => (DMatrix::zeros(p, p), DVector::zeros(p)),
        BetaPrior::Normal { mean, precision } => {
            let m = DVector::from_column_slice(mean);
            (precision.clone(), precision * m)
        }
    }
}

/// `beta | Y, Z, sigma2` for the latent model, where `resid = Y - Z`:
/// `N((Phi0 + X^T X / sigma2)^{-1} (Phi0 beta0 + X^T resid / sigma2), ...)`.
pub fn sample_beta<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    resid: &[f64],
    sigma2: f64,
    prior: &BetaPrior,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = x.ncols();
    if p == 0 {
        return Ok(Vec::new());
    }
    let (phi0, phi0_beta0) = prior_terms(prior, p);
    let r = DVector::from_column_slice(resid);
    let precision = phi0 + x.transpose() * x / sigma2;
    let b = phi0_beta0 + x.transpose() * r / sigma2;
    draw_from_canonical(precision, b, rng)
}

/// `beta | Y, sigma2, theta` for the response model, from `X^T Phi X` and
/// `X^T Phi Y`.
pub fn sample_beta_response<R: Rng + ?Sized>(
    xt_phi_x: &DMatrix<f64>,
    xt_phi_y: &DVector<f64>,
    prior: &BetaPrior,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = xt_phi_x.ncols();
    if p == 0 {
        return Ok(Vec::new());
    }
    let (phi0, phi0_beta0) = prior_terms(prior, p);
    draw_from_canonical(phi0 + xt_phi_x, phi0_beta0 + xt_phi_y, rng)
}

/// `sigma2 | Y, Z, beta ~ IG(a0 + n/2, b0 + ||resid||^2 / 2)`.
pub fn sample_sigma2<R: Rng + ?Sized>(resid: &[f64], prior: &InverseGamma, rng: &mut R) -> f64 {
    let ss: f64 = resid.iter().map(|r| r * r).sum();
    let shape = prior.shape + resid.len() as f64 / 2.0;
    let scale = prior.scale + ss / 2.0;
    let g = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}
