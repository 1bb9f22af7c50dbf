//! Isotropic covariance functions and covariance-matrix assembly.

mod bessel;
mod radius;

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::geometry::{distance, LocationSet};

pub use bessel::{bessel_k, scaled_bessel_k};
pub use radius::{ln_recommended_radius, recommend_radius};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Exponential,
    Matern,
    Gaussian,
    GeneralizedCauchy,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Matern => "matern",
            Family::Gaussian => "gaussian",
            Family::GeneralizedCauchy => "generalized_cauchy",
        }
    }

    /// Parameter names in the order used by [`KernelSpec::params`].
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Exponential => &["tau2", "phi"],
            Family::Matern => &["sigma2", "alpha", "nu"],
            Family::Gaussian => &["sigma2", "a"],
            Family::GeneralizedCauchy => &["sigma2", "alpha", "delta", "lambda"],
        }
    }

    /// Names of the parameters sampled by MCMC (variance and range).
    pub fn theta_names(self) -> &'static [&'static str] {
        &self.param_names()[..2]
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "exponential" | "exp" => Ok(Family::Exponential),
            "matern" => Ok(Family::Matern),
            "gaussian" | "squared_exponential" => Ok(Family::Gaussian),
            "generalized_cauchy" | "cauchy" => Ok(Family::GeneralizedCauchy),
            other => Err(Error::InvalidKernel(format!("unknown family '{other}'"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An isotropic covariance function `K0(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `tau2 * exp(-phi r)`
    Exponential { tau2: f64, phi: f64 },
    /// `sigma2 2^{1-nu} / Gamma(nu) (alpha r)^nu K_nu(alpha r)`
    Matern { sigma2: f64, alpha: f64, nu: f64 },
    /// `sigma2 * exp(-a r^2)`
    Gaussian { sigma2: f64, a: f64 },
    /// `sigma2 * (1 + (r / alpha)^delta)^{-lambda / delta}`
    GeneralizedCauchy {
        sigma2: f64,
        alpha: f64,
        delta: f64,
        lambda: f64,
    },
}

impl KernelSpec {
    pub fn exponential(tau2: f64, phi: f64) -> Result<Self> {
        Self::from_params(Family::Exponential, &[tau2, phi])
    }

    pub fn matern(sigma2: f64, alpha: f64, nu: f64) -> Result<Self> {
        Self::from_params(Family::Matern, &[sigma2, alpha, nu])
    }

    pub fn gaussian(sigma2: f64, a: f64) -> Result<Self> {
        Self::from_params(Family::Gaussian, &[sigma2, a])
    }

    pub fn generalized_cauchy(sigma2: f64, alpha: f64, delta: f64, lambda: f64) -> Result<Self> {
        Self::from_params(Family::GeneralizedCauchy, &[sigma2, alpha, delta, lambda])
    }

    /// Builds a kernel from parameters listed in [`Family::param_names`] order.
    pub fn from_params(family: Family, params: &[f64]) -> Result<Self> {
        let names = family.param_names();
        if params.len() != names.len() {
            return Err(Error::InvalidKernel(format!(
                "{family} takes {} parameters ({}), got {}",
                names.len(),
                names.join(", "),
                params.len()
            )));
        }
        for (name, &v) in names.iter().zip(params) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "{family} parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        let k = match family {
            Family::Exponential => KernelSpec::Exponential {
                tau2: params[0],
                phi: params[1],
            },
            Family::Matern => KernelSpec::Matern {
                sigma2: params[0],
                alpha: params[1],
                nu: params[2],
            },
            Family::Gaussian => KernelSpec::Gaussian {
                sigma2: params[0],
                a: params[1],
            },
            Family::GeneralizedCauchy => {
                if params[2] > 2.0 {
                    return Err(Error::InvalidKernel(format!(
                        "generalized_cauchy delta must lie in (0, 2], got {}",
                        params[2]
                    )));
                }
                KernelSpec::GeneralizedCauchy {
                    sigma2: params[0],
                    alpha: params[1],
                    delta: params[2],
                    lambda: params[3],
                }
            }
        };
        Ok(k)
    }

    pub fn family(&self) -> Family {
        match self {
            KernelSpec::Exponential { .. } => Family::Exponential,
            KernelSpec::Matern { .. } => Family::Matern,
            KernelSpec::Gaussian { .. } => Family::Gaussian,
            KernelSpec::GeneralizedCauchy { .. } => Family::GeneralizedCauchy,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            KernelSpec::Exponential { tau2, phi } => vec![tau2, phi],
            KernelSpec::Matern { sigma2, alpha, nu } => vec![sigma2, alpha, nu],
            KernelSpec::Gaussian { sigma2, a } => vec![sigma2, a],
            KernelSpec::GeneralizedCauchy {
                sigma2,
                alpha,
                delta,
                lambda,
            } => vec![sigma2, alpha, delta, lambda],
        }
    }

    /// Variance and range parameters, the part of the kernel sampled by MCMC.
    pub fn theta(&self) -> [f64; 2] {
        let p = self.params();
        [p[0], p[1]]
    }

    /// Same family and shape with new variance and range parameters.
    pub fn with_theta(&self, theta: [f64; 2]) -> Result<Self> {
        let mut p = self.params();
        p[0] = theta[0];
        p[1] = theta[1];
        Self::from_params(self.family(), &p)
    }

    /// `K0(0)`.
    pub fn variance(&self) -> f64 {
        self.params()[0]
    }

    /// `K0(r)`, rejecting negative or non-finite distances.
    pub fn value(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::NegativeDistance(r));
        }
        Ok(self.eval(r))
    }

    /// `K0(r)` for `r >= 0` without validation.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::Exponential { tau2, phi } => tau2 * (-phi * r).exp(),
            KernelSpec::Matern { sigma2, alpha, nu } => sigma2 * matern_correlation(nu, alpha * r),
            KernelSpec::Gaussian { sigma2, a } => sigma2 * (-a * r * r).exp(),
            KernelSpec::GeneralizedCauchy {
                sigma2,
                alpha,
                delta,
                lambda,
            } => {
                if r == 0.0 {
                    sigma2
                } else {
                    sigma2 * (1.0 + (r / alpha).powf(delta)).powf(-lambda / delta)
                }
            }
        }
    }

    /// `K0(|a - b|)`.
    #[inline]
    pub fn between(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval(distance(a, b))
    }
}

/// Matérn correlation at scaled distance `x = alpha r`.
fn matern_correlation(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if let Some(p) = half_integer_order(nu) {
        // nu = p + 1/2: e^{-x} p!/(2p)! sum_i (p+i)!/(i!(p-i)!) (2x)^{p-i}
        let mut sum = 0.0;
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        let norm = fact(p) / fact(2 * p);
        for i in 0..=p {
            sum += fact(p + i) / (fact(i) * fact(p - i)) * (2.0 * x).powi((p - i) as i32);
        }
        return (-x).exp() * norm * sum;
    }
    if x > 700.0 {
        return 0.0;
    }
    // 2^{1-nu}/Gamma(nu) x^nu K_nu(x), assembled in log space
    let log = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * x.ln() - x
        + scaled_bessel_k(nu, x).ln();
    log.exp().min(1.0)
}

fn half_integer_order(nu: f64) -> Option<usize> {
    let p = nu - 0.5;
    if p >= 0.0 && p <= 20.0 && p.fract() == 0.0 {
        Some(p as usize)
    } else {
        None
    }
}

/// `Sigma_{A,B}` with entries `K0(|a_i - b_j|)`, assembled in parallel over rows.
pub fn cov_matrix(k: &KernelSpec, a: &LocationSet, b: &LocationSet) -> DMatrix<f64> {
    let (n, m) = (a.len(), b.len());
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..m).map(|j| k.between(a.point(i), b.point(j))).collect())
        .collect();
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// `Sigma_{A,A}`, exactly symmetric with `K0(0)` on the diagonal.
pub fn cov_matrix_sym(k: &KernelSpec, a: &LocationSet) -> DMatrix<f64> {
    let n = a.len();
    let mut out = cov_matrix(k, a, a);
    for i in 0..n {
        out[(i, i)] = k.variance();
        for j in 0..i {
            let v = out[(i, j)];
            out[(j, i)] = v;
        }
    }
    out
}

pub(crate) fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}
