//! Radius advisor: the smallest radius for which the approximation error
//! bound is guaranteed to vanish, for a given minimal separation and size.

use statrs::function::gamma::ln_gamma;

use super::{gamma_fn, KernelSpec};
use crate::error::{Error, Result};

struct Constants {
    c2: f64,
    c3: f64,
}

fn constants(q: f64, d: usize) -> Constants {
    let df = d as f64;
    let g = gamma_fn(df / 2.0 + 1.0);
    let c2 = 12.0 * (std::f64::consts::PI * g * g / 9.0).powf(1.0 / (df + 1.0));
    let c1 = 2.0 * g * (2f64.powf(1.5) / c2).powi(d as i32);
    let c3 = c1 * df * df * 2f64.powi(d as i32) * (1.0 + df + q / 2.0) * (1.0 + q / 2.0).powi(d as i32 - 1);
    Constants { c2, c3 }
}

/// Recommended approximation radius for kernel `k`, minimal separation `q`,
/// sample size `n` and dimension `d`. Exponential kernels are treated as
/// Matérn with `nu = 1/2`. The generalized Cauchy bound carries an unspecified
/// constant, taken as 1.
///
/// The bounds grow very quickly as `q` shrinks; when the value does not fit in
/// an `f64` an error is returned and [`ln_recommended_radius`] gives its log.
pub fn recommend_radius(k: &KernelSpec, q: f64, n: usize, d: usize) -> Result<f64> {
    let ln_rho = ln_recommended_radius(k, q, n, d)?;
    let rho = ln_rho.exp();
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::RadiusPrecondition(format!(
            "recommended radius exp({ln_rho:.6e}) is not representable"
        )));
    }
    Ok(rho)
}

/// Natural log of [`recommend_radius`], evaluated without overflow.
pub fn ln_recommended_radius(k: &KernelSpec, q: f64, n: usize, d: usize) -> Result<f64> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::RadiusPrecondition(format!("q must be positive, got {q}")));
    }
    if n == 0 || d == 0 {
        return Err(Error::RadiusPrecondition("n and d must be positive".into()));
    }
    let nf = n as f64;
    let df = d as f64;
    let Constants { c2, c3 } = constants(q, d);
    let ln_rho = match *k {
        KernelSpec::Exponential { tau2, phi } => matern(tau2, phi, 0.5, q, nf, df, c2, c3)?,
        KernelSpec::Matern { sigma2, alpha, nu } => matern(sigma2, alpha, nu, q, nf, df, c2, c3)?,
        KernelSpec::Gaussian { sigma2, a } => {
            if q >= a.powf(-0.5) {
                return Err(Error::RadiusPrecondition(format!(
                    "gaussian requires q < a^(-1/2): q = {q}, a^(-1/2) = {}",
                    a.powf(-0.5)
                )));
            }
            let e = c2 * c2 / (a * q * q);
            let ln_lead = (c3 / sigma2).ln() + e;
            let rest = (nf * q.powf(-df) * sigma2.powi(-5)).ln() + 5.0 * e;
            0.5 * (df / a).ln() + 3.0 * ln_sum(ln_lead, rest)?
        }
        KernelSpec::GeneralizedCauchy {
            alpha,
            delta,
            lambda,
            ..
        } => {
            if lambda <= df + 1.0 {
                return Err(Error::RadiusPrecondition(format!(
                    "generalized_cauchy requires lambda > d + 1: lambda = {lambda}, d = {d}"
                )));
            }
            if q >= alpha {
                return Err(Error::RadiusPrecondition(format!(
                    "generalized_cauchy requires q < alpha: q = {q}, alpha = {alpha}"
                )));
            }
            let gap = lambda - (df + 1.0);
            let exponent = (12.5 * df + delta * (lambda + 4.5) * nf) / gap;
            -exponent * q.ln() + nf.ln() / gap
        }
    };
    if !ln_rho.is_finite() {
        return Err(Error::RadiusPrecondition(format!(
            "recommended radius is not finite (log value {ln_rho})"
        )));
    }
    Ok(ln_rho)
}

/// `ln(exp(ln_lead) + rest)` for a positive leading term and a real remainder.
fn ln_sum(ln_lead: f64, rest: f64) -> Result<f64> {
    let ratio = rest * (-ln_lead).exp();
    if ratio <= -1.0 {
        return Err(Error::RadiusPrecondition(
            "radius bound bracket is not positive".into(),
        ));
    }
    Ok(ln_lead + ratio.ln_1p())
}

#[allow(clippy::too_many_arguments)]
fn matern(sigma2: f64, alpha: f64, nu: f64, q: f64, n: f64, d: f64, c2: f64, c3: f64) -> Result<f64> {
    if q >= 1.0 / alpha {
        return Err(Error::RadiusPrecondition(format!(
            "matern requires q < 1/alpha: q = {q}, 1/alpha = {}",
            1.0 / alpha
        )));
    }
    let ln_cm1 = ln_gamma(nu)
        - sigma2.ln()
        - d * std::f64::consts::LN_2
        - d / 2.0 * std::f64::consts::PI.ln()
        - ln_gamma(nu + d / 2.0);
    let ln_g = (4.0 * c2 * c2 / (alpha * alpha * q * q)).ln_1p();
    let s = nu + d / 2.0;
    let ln_lead = c3.ln() + ln_cm1 + s * ln_g;
    let rest = ln_cm1 + n.ln() - d * q.ln() + 5.0 * s * ln_g;
    Ok(0.5 * d.ln() - alpha.ln() + 3.0 * ln_sum(ln_lead, rest)?)
}
