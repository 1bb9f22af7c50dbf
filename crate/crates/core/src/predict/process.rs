use nalgebra::{DMatrix, DVector};

use crate::dag::RadialDag;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::precision::{build_sparse_factor, conditional_row, SparseFactor};

use super::PredictionPlan;

/// The radial neighbors process over a reference set `D` (training first),
/// extended to the whole domain: points outside `D` condition on the training
/// locations closer than `rho`, independently of each other.
#[derive(Debug, Clone)]
pub struct RadialProcess {
    dag: RadialDag,
    factor: SparseFactor,
    kernel: KernelSpec,
    n_train: usize,
}

impl RadialProcess {
    /// Process over the plan's training and test locations.
    pub fn new(plan: &PredictionPlan, kernel: KernelSpec) -> Result<Self> {
        let factor = build_sparse_factor(plan.dag(), &kernel, 0.0)?;
        Ok(RadialProcess {
            dag: plan.dag().clone(),
            factor,
            kernel,
            n_train: plan.n_train(),
        })
    }

    /// Mean and covariance of the process at `points`, in the given order.
    pub fn finite_dimensional_law(&self, points: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let loc = self.dag.ordered_locations();
        let mut in_d = Vec::with_capacity(points.len());
        for (a, p) in points.iter().enumerate() {
            if p.len() != loc.dim() {
                return Err(Error::DimensionMismatch {
                    expected: loc.dim(),
                    found: p.len(),
                });
            }
            if points[..a].iter().any(|q| q == p) {
                return Err(Error::InvalidData(format!("point {a} repeats an earlier point")));
            }
            in_d.push(loc.find(p));
        }
        // closure: every node up to the last requested one, and all of training
        let last = in_d.iter().flatten().max().copied();
        let c = last.map_or(self.n_train, |i| (i + 1).max(self.n_train));

        // M = (I - B)^{-1} D^{1/2} on the first c positions; Sigma_CC = M M^T
        let mut m = DMatrix::<f64>::zeros(c, c);
        for j in 0..c {
            m[(j, j)] = self.factor.d()[j].sqrt();
        }
        for i in 0..c {
            let (cols, vals) = self.factor.row(i);
            for (&q, &b) in cols.iter().zip(vals) {
                let row_q = m.row(q).clone_owned();
                let mut row_i = m.row_mut(i);
                row_i += row_q * b;
            }
        }

        // outside points: coefficient rows on training positions
        let outside: Vec<usize> = (0..points.len()).filter(|&a| in_d[a].is_none()).collect();
        let u = outside.len();
        let mut bu = DMatrix::<f64>::zeros(u, c);
        let mut du = vec![0.0; u];
        for (r, &a) in outside.iter().enumerate() {
            let parents: Vec<usize> = (0..self.n_train)
                .filter(|&pos| crate::geometry::distance(loc.point(pos), &points[a]) < self.dag.rho())
                .collect();
            let pa_pts: Vec<&[f64]> = parents.iter().map(|&q| loc.point(q)).collect();
            let (coef, d) = conditional_row(&self.kernel, &points[a], &pa_pts, 0.0, 0.0, a)?;
            for (&q, b) in parents.iter().zip(coef) {
                bu[(r, q)] = b;
            }
            du[r] = d;
        }

        // joint linear map from independent noise to (Z_C, Z_U)
        let mut lin = DMatrix::<f64>::zeros(c + u, c + u);
        lin.view_mut((0, 0), (c, c)).copy_from(&m);
        let bm = &bu * &m;
        lin.view_mut((c, 0), (u, c)).copy_from(&bm);
        for r in 0..u {
            lin[(c + r, c + r)] = du[r].sqrt();
        }
        let rows: Vec<usize> = (0..points.len())
            .map(|a| match in_d[a] {
                Some(pos) => pos,
                None => c + outside.iter().position(|&o| o == a).expect("outside point"),
            })
            .collect();
        let sel = DMatrix::from_fn(points.len(), c + u, |a, j| lin[(rows[a], j)]);
        let cov = &sel * sel.transpose();
        Ok((DVector::zeros(points.len()), cov))
    }
}
