//! Distances between Gaussian laws, bounds on the approximation error, and
//! predictive scores.

mod predictive;
mod sliced;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::dag::RadialDag;
use crate::error::{Error, Result};
use crate::kernels::{cov_matrix_sym, KernelSpec};
use crate::precision::{
    build_exact_factor_capped, build_sparse_factor, dense_radgp_covariance_capped, SparseFactor,
    DEFAULT_DIAGNOSTIC_CAP,
};

pub use predictive::{mse_and_coverage, summarize_draws, write_summary_csv, PredictiveSummary};
pub use sliced::{sliced_w2, wasserstein_1d_squared, DEFAULT_PROJECTIONS};

const SYMMETRY_TOL: f64 = 1e-8;
const CLAMP_TOL: f64 = 1e-12;

fn check_square(c: &DMatrix<f64>, name: &str) -> Result<()> {
    if c.nrows() != c.ncols() {
        return Err(Error::InvalidMatrix(format!("{name} is {}x{}", c.nrows(), c.ncols())));
    }
    let scale = c.amax().max(f64::MIN_POSITIVE);
    let asym = (c - c.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidMatrix(format!("{name} is not symmetric (deviation {asym:.3e})")));
    }
    Ok(())
}

/// Eigenvalues and eigenvectors of a symmetric PSD matrix with small negative
/// eigenvalues set to zero.
fn psd_eigen(c: &DMatrix<f64>, name: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sym = (c + c.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let lmin = eig.eigenvalues.min();
    if lmin < -SYMMETRY_TOL * lmax.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidMatrix(format!(
            "{name} is indefinite (eigenvalue {lmin:.3e})"
        )));
    }
    let vals = eig.eigenvalues.map(|v| if v < CLAMP_TOL * lmax { 0.0 } else { v });
    Ok((vals, eig.eigenvectors))
}

fn sqrtm_psd(c: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = psd_eigen(c, name)?;
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * vals[j].sqrt());
    Ok(&scaled * vecs.transpose())
}

/// Squared 2-Wasserstein distance between `N(m1, c1)` and `N(m2, c2)`:
/// `|m1 - m2|^2 + tr c1 + tr c2 - 2 tr (c1^{1/2} c2 c1^{1/2})^{1/2}`.
pub fn w2_gaussian(m1: &DVector<f64>, c1: &DMatrix<f64>, m2: &DVector<f64>, c2: &DMatrix<f64>) -> Result<f64> {
    check_square(c1, "first covariance")?;
    check_square(c2, "second covariance")?;
    let n = c1.nrows();
    if c2.nrows() != n || m1.len() != n || m2.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c2.nrows().min(m1.len()).min(m2.len()),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let r1 = sqrtm_psd(c1, "first covariance")?;
    psd_eigen(c2, "second covariance")?;
    let mid = &r1 * c2 * &r1;
    let (vals, _) = psd_eigen(&((&mid + mid.transpose()) * 0.5), "product")?;
    let cross: f64 = vals.iter().map(|v| v.sqrt()).sum();
    let w = (m1 - m2).norm_squared() + c1.trace() + c2.trace() - 2.0 * cross;
    Ok(w.max(0.0))
}

/// Trace norm (sum of singular values) of `c1 - c2`.
pub fn w2_trace_bound(c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> Result<f64> {
    if c1.shape() != c2.shape() {
        return Err(Error::DimensionMismatch {
            expected: c1.nrows(),
            found: c2.nrows(),
        });
    }
    if c1.is_empty() {
        return Ok(0.0);
    }
    Ok((c1 - c2).singular_values().sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnBound {
    Met(f64),
    /// `|L_hat - L|_2` exceeded `|Sigma|_2^{-1/2} / 2`.
    Unmet { distance: f64, threshold: f64 },
}

impl ColumnBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            ColumnBound::Met(v) => Some(*v),
            ColumnBound::Unmet { .. } => None,
        }
    }
}

/// Column-wise bound on the trace distance between the exact covariance
/// `cov` and the approximation, valid when `|L_hat - L|_2 <= |Sigma|_2^{-1/2}/2`
/// with `L = (I - B^T) D^{-1/2}`:
/// `8 n |Sigma|_2^2 (2 max|l_i| max|l_i - l_hat_i| + max|l_i - l_hat_i|^2)`.
pub fn w2_column_bound(exact: &SparseFactor, approx: &SparseFactor, cov: &DMatrix<f64>) -> Result<ColumnBound> {
    if exact.order() != approx.order() {
        return Err(Error::OrderingMismatch);
    }
    let n = exact.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: cov.nrows(),
        });
    }
    if n == 0 {
        return Ok(ColumnBound::Met(0.0));
    }
    let l = exact.l_dense();
    let diff = approx.l_dense() - &l;
    let dist = diff.singular_values().max();
    let sigma_norm = cov.singular_values().max();
    let threshold = 0.5 / sigma_norm.sqrt();
    if dist > threshold {
        return Ok(ColumnBound::Unmet {
            distance: dist,
            threshold,
        });
    }
    let max_l = (0..n).map(|j| l.column(j).norm()).fold(0.0, f64::max);
    let max_d = (0..n).map(|j| diff.column(j).norm()).fold(0.0, f64::max);
    Ok(ColumnBound::Met(
        8.0 * n as f64 * sigma_norm * sigma_norm * (2.0 * max_l * max_d + max_d * max_d),
    ))
}

/// Exact and approximate covariance on a DAG's locations together with the
/// distance between them and its two upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct W2Report {
    pub w2_squared: f64,
    pub trace_bound: f64,
    pub column_bound: ColumnBound,
    pub inputs_hash: u64,
}

/// Compares the radial neighbors law of `dag` under `k` with the exact
/// Gaussian process law on the same locations. Limited to
/// [`DEFAULT_DIAGNOSTIC_CAP`] locations.
pub fn w2_report(dag: &RadialDag, k: &KernelSpec) -> Result<W2Report> {
    w2_report_capped(dag, k, DEFAULT_DIAGNOSTIC_CAP)
}

pub fn w2_report_capped(dag: &RadialDag, k: &KernelSpec, cap: usize) -> Result<W2Report> {
    let approx = build_sparse_factor(dag, k, 0.0)?;
    let exact = build_exact_factor_capped(dag, k, cap)?;
    let sigma = cov_matrix_sym(k, dag.ordered_locations());
    let sigma_hat = dense_radgp_covariance_capped(&approx, cap)?;
    let zero = DVector::zeros(dag.len());
    let mut h = DefaultHasher::new();
    k.params().iter().for_each(|v| v.to_bits().hash(&mut h));
    dag.rho().to_bits().hash(&mut h);
    dag.order().hash(&mut h);
    for p in dag.ordered_locations().points() {
        p.iter().for_each(|v| v.to_bits().hash(&mut h));
    }
    Ok(W2Report {
        w2_squared: w2_gaussian(&zero, &sigma, &zero, &sigma_hat)?,
        trace_bound: w2_trace_bound(&sigma, &sigma_hat)?,
        column_bound: w2_column_bound(&exact, &approx, &sigma)?,
        inputs_hash: h.finish(),
    })
}

/// Writes `region,method,value` rows.
pub fn write_comparison_csv<W: Write>(writer: W, rows: &[(String, String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["region", "method", "value"])?;
    for (region, method, value) in rows {
        w.write_record([region.as_str(), method.as_str(), &format!("{value:.16e}")])?;
    }
    w.flush()?;
    Ok(())
}
