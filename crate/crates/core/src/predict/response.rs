use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::LocationSet;
use crate::kernels::{cov_matrix, cov_matrix_sym, KernelSpec};
use crate::precision::SparseFactor;

/// Mean and covariance of the noisy test responses (before adding the
/// regression term) given training residuals `resid` in factor position order.
///
/// `factor` approximates `(Sigma + sigma2 I)^{-1}` on the training set and
/// `train` lists the training locations in the same position order. The
/// covariance is `Sigma_22 + sigma2 I - Sigma_21 Phi Sigma_12`.
pub fn response_predictive_moments(
    k: &KernelSpec,
    sigma2: f64,
    factor: &SparseFactor,
    train: &LocationSet,
    test: &LocationSet,
    resid: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if train.len() != factor.len() || resid.len() != factor.len() {
        return Err(Error::DimensionMismatch {
            expected: factor.len(),
            found: resid.len().min(train.len()),
        });
    }
    let s21 = cov_matrix(k, test, train);
    let phi_r = DVector::from_vec(factor.apply_precision(resid)?);
    let mean = &s21 * phi_r;
    Ok((mean, predictive_covariance(k, sigma2, factor, test, &s21)))
}

fn predictive_covariance(
    k: &KernelSpec,
    sigma2: f64,
    factor: &SparseFactor,
    test: &LocationSet,
    s21: &DMatrix<f64>,
) -> DMatrix<f64> {
    // Sigma_21 Phi Sigma_12 = G^T G with G = D^{-1/2} (I - B) Sigma_12
    let m = test.len();
    let mut g = DMatrix::<f64>::zeros(factor.len(), m);
    for t in 0..m {
        let col: Vec<f64> = s21.row(t).iter().copied().collect();
        let v = factor.apply_i_minus_b(&col);
        for (i, (x, d)) in v.iter().zip(factor.d()).enumerate() {
            g[(i, t)] = x / d.sqrt();
        }
    }
    let mut cov = cov_matrix_sym(k, test) - g.transpose() * g;
    for t in 0..m {
        cov[(t, t)] += sigma2;
    }
    cov
}

/// Lower factor `F` with `F F^T = cov`; falls back to an eigendecomposition
/// with negative eigenvalues clamped to zero.
fn covariance_root(cov: DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = cov.clone().cholesky() {
        return ch.l();
    }
    warn!("predictive covariance not positive definite; clamping eigenvalues");
    let eig = cov.symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    v
}

/// Response-model predictive sampler for a fixed training and test set.
/// Covariance roots are cached while `(theta, sigma2)` is unchanged.
#[derive(Debug, Clone)]
pub struct ResponsePredictor {
    train: LocationSet,
    test: LocationSet,
    key: Option<Vec<u64>>,
    s21: DMatrix<f64>,
    root: DMatrix<f64>,
}

impl ResponsePredictor {
    /// `train` in factor position order.
    pub fn new(train: LocationSet, test: LocationSet) -> Self {
        ResponsePredictor {
            train,
            test,
            key: None,
            s21: DMatrix::zeros(0, 0),
            root: DMatrix::zeros(0, 0),
        }
    }

    /// One draw of the test responses: `X_2 beta` (given as `xb_test`) plus
    /// the noisy spatial term.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        k: &KernelSpec,
        sigma2: f64,
        factor: &SparseFactor,
        resid: &[f64],
        xb_test: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let m = self.test.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let mut key: Vec<u64> = k.params().iter().map(|v| v.to_bits()).collect();
        key.push(sigma2.to_bits());
        if self.key.as_ref() != Some(&key) {
            self.s21 = cov_matrix(k, &self.test, &self.train);
            let cov = predictive_covariance(k, sigma2, factor, &self.test, &self.s21);
            self.root = covariance_root(cov);
            self.key = Some(key);
        }
        let phi_r = DVector::from_vec(factor.apply_precision(resid)?);
        let mean = &self.s21 * phi_r;
        let e = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = &self.root * e;
        Ok((0..m).map(|t| xb_test[t] + mean[t] + noise[t]).collect())
    }
}
