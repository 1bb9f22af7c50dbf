//! Sparse precision factor `Phi = (I - B)^T D^{-1} (I - B)`.
//!
//! Row `i` of `B` holds the regression coefficients of node `i` on its DAG
//! parents and `D[i]` the matching conditional variance. All matrices live in
//! DAG position order.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dag::RadialDag;
use crate::error::{Error, Result};
use crate::kernels::{cov_matrix_sym, KernelSpec};

/// Largest size accepted by the dense diagnostic routines by default.
pub const DEFAULT_DIAGNOSTIC_CAP: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFactor {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    d: Vec<f64>,
    order: Vec<usize>,
}

/// Coefficients and conditional variance of the Gaussian at `target` given
/// values at `parents`, under `k` plus an optional nugget on every variance.
///
/// `jitter` is added to the parent block only if its Cholesky fails.
pub(crate) fn conditional_row(
    k: &KernelSpec,
    target: &[f64],
    parents: &[&[f64]],
    nugget: f64,
    jitter: f64,
    row: usize,
) -> Result<(Vec<f64>, f64)> {
    let var = k.variance() + nugget;
    let m = parents.len();
    if m == 0 {
        return Ok((Vec::new(), var));
    }
    let block = DMatrix::from_fn(m, m, |a, b| {
        if a == b {
            var
        } else {
            k.between(parents[a], parents[b])
        }
    });
    let c = DVector::from_fn(m, |a, _| k.between(parents[a], target));
    let solve = |ridge: f64| -> Option<(Vec<f64>, f64)> {
        let mut blk = block.clone();
        for a in 0..m {
            blk[(a, a)] += ridge;
        }
        let b = blk.cholesky()?.solve(&c);
        let dval = var - c.dot(&b);
        (dval > 0.0).then(|| (b.iter().copied().collect(), dval))
    };
    if let Some(out) = solve(0.0) {
        return Ok(out);
    }
    if jitter > 0.0 {
        if let Some(out) = solve(jitter) {
            warn!("parent block of row {row} needed jitter {jitter:e}");
            return Ok(out);
        }
    }
    let min_eigenvalue = block.symmetric_eigenvalues().min();
    Err(Error::SingularBlock { row, min_eigenvalue })
}

/// Builds the sparse factor of the RadGP precision for `dag` under `k`.
pub fn build_sparse_factor(dag: &RadialDag, k: &KernelSpec, jitter: f64) -> Result<SparseFactor> {
    build_sparse_factor_with_nugget(dag, k, 0.0, jitter)
}

/// As [`build_sparse_factor`], for the covariance `K + nugget * I`.
pub fn build_sparse_factor_with_nugget(
    dag: &RadialDag,
    k: &KernelSpec,
    nugget: f64,
    jitter: f64,
) -> Result<SparseFactor> {
    let loc = dag.ordered_locations();
    let rows: Vec<(Vec<f64>, f64)> = (0..dag.len())
        .into_par_iter()
        .map(|i| {
            let parents: Vec<&[f64]> = dag.parents(i).iter().map(|&p| loc.point(p)).collect();
            conditional_row(k, loc.point(i), &parents, nugget, jitter, i)
        })
        .collect::<Result<_>>()?;
    let mut offsets = Vec::with_capacity(dag.len() + 1);
    offsets.push(0);
    let mut cols = Vec::with_capacity(dag.edge_count());
    let mut values = Vec::with_capacity(dag.edge_count());
    let mut d = Vec::with_capacity(dag.len());
    for (i, (coef, dval)) in rows.into_iter().enumerate() {
        cols.extend_from_slice(dag.parents(i));
        values.extend(coef);
        offsets.push(cols.len());
        d.push(dval);
    }
    Ok(SparseFactor {
        offsets,
        cols,
        values,
        d,
        order: dag.order().to_vec(),
    })
}

/// Exact factor of `Sigma^{-1}` in the DAG's ordering, where every node
/// conditions on all earlier nodes. Computed from the dense Cholesky factor
/// `Sigma = L L^T` via `I - B = diag(L) L^{-1}` and `D = diag(L)^2`.
pub fn build_exact_factor(dag: &RadialDag, k: &KernelSpec) -> Result<SparseFactor> {
    build_exact_factor_capped(dag, k, DEFAULT_DIAGNOSTIC_CAP)
}

pub fn build_exact_factor_capped(dag: &RadialDag, k: &KernelSpec, cap: usize) -> Result<SparseFactor> {
    let n = dag.len();
    if n > cap {
        return Err(Error::DiagnosticCap { n, cap });
    }
    let sigma = cov_matrix_sym(k, dag.ordered_locations());
    let l = match sigma.clone().cholesky() {
        Some(ch) => ch.l(),
        None => {
            return Err(Error::SingularBlock {
                row: n.saturating_sub(1),
                min_eigenvalue: sigma.symmetric_eigenvalues().min(),
            })
        }
    };
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::InvalidMatrix("triangular inverse failed".into()))?;
    let mut offsets = vec![0];
    let mut cols = Vec::new();
    let mut values = Vec::new();
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let lii = l[(i, i)];
        for j in 0..i {
            cols.push(j);
            values.push(-lii * l_inv[(i, j)]);
        }
        offsets.push(cols.len());
        d.push(lii * lii);
    }
    Ok(SparseFactor {
        offsets,
        cols,
        values,
        d,
        order: dag.order().to_vec(),
    })
}

impl SparseFactor {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Point indices in position order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Conditional variances `D[i]`.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Parent positions and coefficients of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.values[r])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `(I - B) x`
    pub fn apply_i_minus_b(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (cols, vals) = self.row(i);
                x[i] - cols.iter().zip(vals).map(|(&j, &b)| b * x[j]).sum::<f64>()
            })
            .collect()
    }

    /// `(I - B)^T x`
    pub fn apply_i_minus_bt(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for i in 0..self.len() {
            let (cols, vals) = self.row(i);
            for (&j, &b) in cols.iter().zip(vals) {
                out[j] -= b * x[i];
            }
        }
        out
    }

    /// Solves `(I - B) x = y` by forward substitution.
    pub fn solve_i_minus_b(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        for i in 0..self.len() {
            let (cols, vals) = self.row(i);
            x[i] += cols.iter().zip(vals).map(|(&j, &b)| b * x[j]).sum::<f64>();
        }
        x
    }

    /// `Phi x` without forming `Phi`.
    pub fn apply_precision(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(self.apply_precision_unchecked(x))
    }

    pub(crate) fn apply_precision_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut u = self.apply_i_minus_b(x);
        for (v, d) in u.iter_mut().zip(&self.d) {
            *v /= d;
        }
        self.apply_i_minus_bt(&u)
    }

    /// `L w` with `L = (I - B)^T D^{-1/2}`, so that `L L^T = Phi`.
    pub fn apply_sqrt_factor(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(w)?;
        let u: Vec<f64> = w.iter().zip(&self.d).map(|(v, d)| v / d.sqrt()).collect();
        Ok(self.apply_i_minus_bt(&u))
    }

    /// Diagonal of `Phi`: `1/D[i] + sum_k B[k,i]^2 / D[k]`.
    pub fn precision_diagonal(&self) -> Vec<f64> {
        let mut diag: Vec<f64> = self.d.iter().map(|d| 1.0 / d).collect();
        for k in 0..self.len() {
            let (cols, vals) = self.row(k);
            for (&j, &b) in cols.iter().zip(vals) {
                diag[j] += b * b / self.d[k];
            }
        }
        diag
    }

    /// Per-row terms `log N(x_i; B_i x, D_i)`, in position order.
    pub fn log_density_terms(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        Ok((0..self.len())
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.row(i);
                let r = x[i] - cols.iter().zip(vals).map(|(&j, &b)| b * x[j]).sum::<f64>();
                -0.5 * (r * r / self.d[i] + self.d[i].ln() + ln_2pi)
            })
            .collect())
    }

    /// `log N(x; 0, Phi^{-1})`. Rows are evaluated in parallel and summed in a
    /// fixed order, so the result does not depend on scheduling.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density_terms(x)?.iter().sum())
    }

    /// `log det Phi = -sum log D[i]`.
    pub fn log_det_precision(&self) -> f64 {
        -self.d.iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Dense `B`.
    pub fn b_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                b[(i, j)] = v;
            }
        }
        b
    }

    /// Dense `L = (I - B)^T D^{-1/2}`.
    pub fn l_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = DMatrix::identity(n, n) - self.b_dense().transpose();
        for j in 0..n {
            let s = 1.0 / self.d[j].sqrt();
            l.column_mut(j).scale_mut(s);
        }
        l
    }

    /// Dense `Phi`.
    pub fn precision_dense(&self) -> DMatrix<f64> {
        let l = self.l_dense();
        &l * l.transpose()
    }

    /// Writes `row,col,value` triplets of `B`.
    pub fn write_b_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "col", "value"])?;
        for i in 0..self.len() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                w.write_record([i.to_string(), j.to_string(), format!("{v:.16e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `row,d_value` pairs of `D`.
    pub fn write_d_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "d_value"])?;
        for (i, v) in self.d.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `Phi^{-1}` as a dense matrix, via `M = (I - B)^{-1} D^{1/2}` and `M M^T`.
/// For diagnostics on small problems only.
pub fn dense_radgp_covariance(f: &SparseFactor) -> Result<DMatrix<f64>> {
    dense_radgp_covariance_capped(f, DEFAULT_DIAGNOSTIC_CAP)
}

pub fn dense_radgp_covariance_capped(f: &SparseFactor, cap: usize) -> Result<DMatrix<f64>> {
    let n = f.len();
    if n > cap {
        return Err(Error::DiagnosticCap { n, cap });
    }
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = f.d[j].sqrt();
            f.solve_i_minus_b(&e)
        })
        .collect();
    let m = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    let mut s = &m * m.transpose();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Exact covariance in the factor's position order.
pub fn dense_exact_covariance(k: &KernelSpec, dag: &RadialDag) -> Result<DMatrix<f64>> {
    let n = dag.len();
    if n > DEFAULT_DIAGNOSTIC_CAP {
        return Err(Error::DiagnosticCap {
            n,
            cap: DEFAULT_DIAGNOSTIC_CAP,
        });
    }
    Ok(cov_matrix_sym(k, dag.ordered_locations()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::build_dag;
    use crate::geometry::LocationSet;
    use crate::partition::AlternatingPartition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_set(n: usize, seed: u64) -> LocationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LocationSet::new((0..n).map(|_| vec![rng.random(), rng.random()]).collect()).unwrap()
    }

    fn dag_for(set: &LocationSet, rho: f64) -> RadialDag {
        let p = AlternatingPartition::new(set, rho, 1).unwrap();
        build_dag(&p, set).unwrap()
    }

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn single_node() {
        let set = LocationSet::new(vec![vec![0.5, 0.5]]).unwrap();
        let k = KernelSpec::exponential(1.7, 3.0).unwrap();
        let f = build_sparse_factor(&dag_for(&set, 0.2), &k, 0.0).unwrap();
        assert_eq!(f.nnz(), 0);
        assert_eq!(f.d(), &[1.7]);
        assert_eq!(f.apply_sqrt_factor(&[2.0]).unwrap(), vec![2.0 / 1.7f64.sqrt()]);
        assert_eq!(dense_radgp_covariance(&f).unwrap()[(0, 0)], 1.7);
    }

    #[test]
    fn two_nodes() {
        let set = LocationSet::new(vec![vec![0.0, 0.0], vec![0.1, 0.0]]).unwrap();
        let k = KernelSpec::exponential(2.0, 5.0).unwrap();
        let dag = dag_for(&set, 1.0);
        let f = build_sparse_factor(&dag, &k, 0.0).unwrap();
        let (v, c) = (2.0, 2.0 * (-0.5f64).exp());
        let d2 = v - c * c / v;
        assert_eq!(f.row(1).0, &[0]);
        assert!((f.row(1).1[0] - c / v).abs() < 1e-15);
        assert_eq!(f.d()[0], v);
        assert!((f.d()[1] - d2).abs() < 1e-14);

        assert_eq!(f.apply_precision(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let y = f.apply_precision(&[0.0, 1.0]).unwrap();
        assert!((y[0] + (c / v) / d2).abs() < 1e-12);
        assert!((y[1] - 1.0 / d2).abs() < 1e-12);

        let s = dense_radgp_covariance(&f).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[v, c, c, v]);
        assert!((s - want).norm() < 1e-14);

        let e = build_exact_factor(&dag, &k).unwrap();
        assert!((e.d()[1] - f.d()[1]).abs() < 1e-14);
        assert!((e.row(1).1[0] - f.row(1).1[0]).abs() < 1e-14);
    }

    #[test]
    fn complete_dag_recovers_exact_inverse() {
        let set = random_set(40, 5);
        let k = KernelSpec::exponential(1.0, 3.0).unwrap();
        let dag = dag_for(&set, 2.0);
        let f = build_sparse_factor(&dag, &k, 0.0).unwrap();
        let sigma = dense_exact_covariance(&k, &dag).unwrap();
        let phi = f.precision_dense();
        let id = DMatrix::<f64>::identity(40, 40);
        assert!(rel_frob(&(&phi * &sigma), &id) < 1e-8);
        assert!(rel_frob(&dense_radgp_covariance(&f).unwrap(), &sigma) < 1e-8);

        let e = build_exact_factor(&dag, &k).unwrap();
        assert!(rel_frob(&(e.precision_dense() * &sigma), &id) < 1e-8);
    }

    #[test]
    fn apply_matches_dense() {
        let set = random_set(60, 8);
        let k = KernelSpec::matern(1.0, 6.0, 1.5).unwrap();
        let f = build_sparse_factor(&dag_for(&set, 0.2), &k, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let dense = f.precision_dense() * DVector::from_vec(x.clone());
        let sparse = f.apply_precision(&x).unwrap();
        for i in 0..60 {
            assert!((dense[i] - sparse[i]).abs() < 1e-9 * dense.amax());
        }
        let ld = f.l_dense() * DVector::from_vec(x.clone());
        let ls = f.apply_sqrt_factor(&x).unwrap();
        for i in 0..60 {
            assert!((ld[i] - ls[i]).abs() < 1e-10 * ld.amax());
        }
        let diag = f.precision_diagonal();
        let pd = f.precision_dense();
        for i in 0..60 {
            assert!((diag[i] - pd[(i, i)]).abs() < 1e-9 * pd[(i, i)]);
        }
        assert!(f.apply_precision(&x[..5]).is_err());
    }

    #[test]
    fn sqrt_factor_covariance_by_monte_carlo() {
        let set = random_set(10, 17);
        let k = KernelSpec::exponential(1.0, 4.0).unwrap();
        let f = build_sparse_factor(&dag_for(&set, 0.3), &k, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 100_000;
        let mut acc = DMatrix::<f64>::zeros(10, 10);
        for _ in 0..draws {
            let w: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
            let v = DVector::from_vec(f.apply_sqrt_factor(&w).unwrap());
            acc += &v * v.transpose();
        }
        acc /= draws as f64;
        assert!(rel_frob(&acc, &f.precision_dense()) < 0.05);
    }

    #[test]
    fn enlarging_parents_never_increases_variance() {
        let set = random_set(120, 23);
        let k = KernelSpec::exponential(1.0, 10.0).unwrap();
        // an explicit partition shared by both radii so the DAGs are nested
        let p_big = AlternatingPartition::new(&set, 0.25, 3).unwrap();
        let p_small =
            AlternatingPartition::from_subsets(set.clone(), p_big.subsets().to_vec(), 0.12).unwrap();
        let small = build_dag(&p_small, &set).unwrap();
        let big = build_dag(&p_big, &set).unwrap();
        let fs = build_sparse_factor(&small, &k, 0.0).unwrap();
        let fb = build_sparse_factor(&big, &k, 0.0).unwrap();
        for i in 0..set.len() {
            let (ps, pb) = (small.parents(i), big.parents(i));
            if ps.iter().all(|p| pb.contains(p)) {
                assert!(fb.d()[i] <= fs.d()[i] * (1.0 + 1e-12), "row {i}");
            }
        }
    }

    #[test]
    fn roots_keep_marginal_variance_and_bounded_d() {
        let set = random_set(150, 31);
        let k = KernelSpec::gaussian(1.3, 20.0).unwrap();
        let dag = dag_for(&set, 0.1);
        let f = build_sparse_factor(&dag, &k, 0.0).unwrap();
        for i in 0..dag.len() {
            let d = f.d()[i];
            assert!(d > 0.0 && d <= 1.3);
            if dag.parents(i).is_empty() {
                assert_eq!(d, 1.3);
            }
        }
    }

    #[test]
    fn singular_block_reported_and_jitter_rescues() {
        // nearly coincident points under a very smooth kernel
        let set = LocationSet::new(vec![
            vec![0.0, 0.0],
            vec![1e-9, 0.0],
            vec![2e-9, 0.0],
            vec![0.5, 0.0],
        ])
        .unwrap();
        let k = KernelSpec::gaussian(1.0, 0.01).unwrap();
        let dag = dag_for(&set, 10.0);
        match build_sparse_factor(&dag, &k, 0.0) {
            Err(Error::SingularBlock { row, .. }) => assert!(row >= 1),
            other => panic!("expected singular block, got {other:?}"),
        }
        let f = build_sparse_factor(&dag, &k, 1e-6).unwrap();
        assert!(f.d().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn log_density_matches_dense_normal() {
        let set = random_set(30, 44);
        let k = KernelSpec::exponential(0.8, 2.5).unwrap();
        let dag = dag_for(&set, 3.0);
        let f = build_sparse_factor(&dag, &k, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let sigma = dense_exact_covariance(&k, &dag).unwrap();
        let chol = sigma.cholesky().unwrap();
        let zv = DVector::from_vec(z.clone());
        let quad = zv.dot(&chol.solve(&zv));
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let want = -0.5 * (quad + logdet + 30.0 * (2.0 * std::f64::consts::PI).ln());
        assert!((f.log_density(&z).unwrap() - want).abs() < 1e-6);
    }

    #[test]
    fn nugget_factor_targets_noisy_covariance() {
        let set = random_set(25, 3);
        let k = KernelSpec::exponential(1.0, 3.0).unwrap();
        let dag = dag_for(&set, 2.0);
        let f = build_sparse_factor_with_nugget(&dag, &k, 0.3, 0.0).unwrap();
        let mut sigma = dense_exact_covariance(&k, &dag).unwrap();
        for i in 0..25 {
            sigma[(i, i)] += 0.3;
        }
        let id = DMatrix::<f64>::identity(25, 25);
        assert!(rel_frob(&(f.precision_dense() * sigma), &id) < 1e-8);
    }

    #[test]
    fn diagnostic_cap_enforced() {
        let set = random_set(30, 1);
        let k = KernelSpec::exponential(1.0, 3.0).unwrap();
        let dag = dag_for(&set, 0.2);
        let f = build_sparse_factor(&dag, &k, 0.0).unwrap();
        assert!(matches!(
            dense_radgp_covariance_capped(&f, 10),
            Err(Error::DiagnosticCap { n: 30, cap: 10 })
        ));
        assert!(build_exact_factor_capped(&dag, &k, 10).is_err());
    }

    #[test]
    fn csv_dumps() {
        let set = random_set(12, 9);
        let k = KernelSpec::exponential(1.0, 3.0).unwrap();
        let f = build_sparse_factor(&dag_for(&set, 0.4), &k, 0.0).unwrap();
        let mut b = Vec::new();
        f.write_b_csv(&mut b).unwrap();
        assert_eq!(String::from_utf8(b).unwrap().lines().count(), f.nnz() + 1);
        let mut d = Vec::new();
        f.write_d_csv(&mut d).unwrap();
        assert_eq!(String::from_utf8(d).unwrap().lines().count(), 13);
    }
}
