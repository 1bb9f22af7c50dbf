//! Conjugate-gradient sampler for the latent effects.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::precision::SparseFactor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Relative residual tolerance `||W - A z|| / ||W||`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 n`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            tol: 1e-8,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(Phi + I / sigma2) z = w` by preconditioned conjugate gradients,
/// starting from the contents of `z`.
pub fn pcg_solve(
    factor: &SparseFactor,
    sigma2: f64,
    w: &[f64],
    z: &mut [f64],
    cfg: &CgConfig,
) -> Result<CgOutcome> {
    let n = factor.len();
    if w.len() != n || z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.len().min(z.len()),
        });
    }
    let inv_s2 = 1.0 / sigma2;
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = factor.apply_precision_unchecked(x);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += xi * inv_s2;
        }
        y
    };
    let inv_diag: Vec<f64> = match cfg.preconditioner {
        Preconditioner::Jacobi => factor
            .precision_diagonal()
            .iter()
            .map(|d| 1.0 / (d + inv_s2))
            .collect(),
        Preconditioner::None => vec![1.0; n],
    };
    let w_norm = dot(w, w).sqrt();
    if w_norm == 0.0 {
        z.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let max_iter = cfg.max_iter.unwrap_or(10 * n).max(1);
    let az = apply(z);
    let mut r: Vec<f64> = w.iter().zip(&az).map(|(a, b)| a - b).collect();
    let mut s: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = s.clone();
    let mut rs = dot(&r, &s);
    let mut res = dot(&r, &r).sqrt() / w_norm;
    let mut it = 0;
    while res > cfg.tol && it < max_iter {
        let ap = apply(&p);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            z[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            s[i] = r[i] * inv_diag[i];
        }
        let rs_new = dot(&r, &s);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / w_norm;
        it += 1;
    }
    if res > cfg.tol {
        return Err(Error::CgNotConverged {
            iterations: it,
            residual: res,
        });
    }
    Ok(CgOutcome {
        iterations: it,
        relative_residual: res,
    })
}

/// Draws `z ~ N(xi, (Phi + I/sigma2)^{-1})` with
/// `xi = (Phi + I/sigma2)^{-1} resid / sigma2`, where `resid = Y - X beta` in
/// factor position order. The right-hand side
/// `W = resid / sigma2 + L W1 + W2 / sigma` has exactly the target precision
/// as its covariance, so solving the system maps it onto the target law.
/// `z` holds the warm start on entry and the draw on exit.
pub fn sample_latent_cg<R: Rng + ?Sized>(
    factor: &SparseFactor,
    resid: &[f64],
    sigma2: f64,
    z: &mut [f64],
    cfg: &CgConfig,
    rng: &mut R,
) -> Result<CgOutcome> {
    let n = factor.len();
    let w1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let lw1 = factor.apply_sqrt_factor(&w1)?;
    let sigma = sigma2.sqrt();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let w2: f64 = rng.sample(StandardNormal);
            resid[i] / sigma2 + lw1[i] + w2 / sigma
        })
        .collect();
    pcg_solve(factor, sigma2, &w, z, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::build_dag;
    use crate::geometry::LocationSet;
    use crate::kernels::KernelSpec;
    use crate::partition::AlternatingPartition;
    use crate::precision::{build_sparse_factor, dense_radgp_covariance};
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_factor(side: usize, rho: f64) -> SparseFactor {
        let set = LocationSet::unit_grid(side, 2);
        let p = AlternatingPartition::new(&set, rho, 1).unwrap();
        let dag = build_dag(&p, &set).unwrap();
        build_sparse_factor(&dag, &KernelSpec::exponential(1.0, 3.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn solves_against_dense() {
        let f = grid_factor(6, 0.45);
        let sigma2 = 0.3;
        let a = f.precision_dense() + DMatrix::identity(36, 36) / sigma2;
        let w: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
        for pre in [Preconditioner::Jacobi, Preconditioner::None] {
            let mut z = vec![0.0; 36];
            let cfg = CgConfig {
                preconditioner: pre,
                ..CgConfig::default()
            };
            let out = pcg_solve(&f, sigma2, &w, &mut z, &cfg).unwrap();
            assert!(out.relative_residual <= 1e-8);
            let want = a.clone().lu().solve(&DVector::from_vec(w.clone())).unwrap();
            for i in 0..36 {
                assert!((z[i] - want[i]).abs() < 1e-6 * want.amax());
            }
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let f = grid_factor(6, 0.45);
        let w = vec![1.0; 36];
        let mut z = vec![0.0; 36];
        let cfg = CgConfig {
            tol: 1e-14,
            max_iter: Some(1),
            preconditioner: Preconditioner::None,
        };
        assert!(matches!(
            pcg_solve(&f, 0.01, &w, &mut z, &cfg),
            Err(Error::CgNotConverged { iterations: 1, .. })
        ));
    }

    #[test]
    fn single_node_closed_form() {
        let set = LocationSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let p = AlternatingPartition::new(&set, 0.5, 1).unwrap();
        let dag = build_dag(&p, &set).unwrap();
        let f = build_sparse_factor(&dag, &KernelSpec::exponential(2.0, 1.0).unwrap(), 0.0).unwrap();
        let mut z = [0.0];
        pcg_solve(&f, 0.5, &[3.0], &mut z, &CgConfig::default()).unwrap();
        assert!((z[0] - 3.0 / (0.5 + 2.0)).abs() < 1e-12);
    }

    fn empirical_moments(f: &SparseFactor, resid: &[f64], sigma2: f64, draws: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
        let n = f.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = vec![0.0; n];
        let mut sum = DVector::<f64>::zeros(n);
        let mut sq = DMatrix::<f64>::zeros(n, n);
        for _ in 0..draws {
            sample_latent_cg(f, resid, sigma2, &mut z, &CgConfig::default(), &mut rng).unwrap();
            let v = DVector::from_column_slice(&z);
            sum += &v;
            sq += &v * v.transpose();
        }
        let m = sum / draws as f64;
        let c = sq / draws as f64 - &m * m.transpose();
        (m, c)
    }

    #[test]
    fn huge_noise_recovers_prior_covariance() {
        let set = {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            LocationSet::new((0..10).map(|_| vec![rng.random(), rng.random()]).collect()).unwrap()
        };
        let p = AlternatingPartition::new(&set, 0.4, 1).unwrap();
        let dag = build_dag(&p, &set).unwrap();
        let f = build_sparse_factor(&dag, &KernelSpec::exponential(1.0, 3.0).unwrap(), 0.0).unwrap();
        let (_, c) = empirical_moments(&f, &[0.0; 10], 1e8, 20_000, 3);
        let want = dense_radgp_covariance(&f).unwrap();
        assert!((c - &want).norm() / want.norm() < 0.1);
    }
}
