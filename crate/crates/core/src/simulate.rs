//! Draws from the exact Gaussian process with a nugget, for synthetic data.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::LocationSet;
use crate::kernels::{cov_matrix_sym, KernelSpec};

/// Largest set simulated by a dense Cholesky factorization unless the caller
/// raises the cap.
pub const DEFAULT_SIMULATION_CAP: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    /// `per_side^d` points on the regular grid spanning `[0, 1]^d`.
    Grid { per_side: usize },
    /// `n` independent uniform points in `[0, 1]^d`.
    Uniform { n: usize },
}

impl Layout {
    pub fn locations<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Result<LocationSet> {
        match *self {
            Layout::Grid { per_side } => Ok(LocationSet::unit_grid(per_side, dim)),
            Layout::Uniform { n } => {
                let pts = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
                LocationSet::with_dim(dim, pts)
            }
        }
    }
}

/// Spatial effect `z` and response `y = z + eps` at a set of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedField {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

/// One draw of `Z ~ N(0, K)` at `locations` and `Y = Z + N(0, nugget)`.
/// Fails above `cap` locations.
pub fn simulate_gp<R: Rng + ?Sized>(
    k: &KernelSpec,
    nugget: f64,
    locations: &LocationSet,
    cap: usize,
    rng: &mut R,
) -> Result<SimulatedField> {
    let n = locations.len();
    if n > cap {
        return Err(Error::DiagnosticCap { n, cap });
    }
    if !(nugget >= 0.0 && nugget.is_finite()) {
        return Err(Error::InvalidConfig(format!("nugget variance {nugget} must be nonnegative")));
    }
    let l = lower_factor(cov_matrix_sym(k, locations), k.variance())?;
    let e = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let z: Vec<f64> = (&l * e).iter().copied().collect();
    let sd = nugget.sqrt();
    let y = z.iter().map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(SimulatedField { z, y })
}

/// Cholesky factor, adding diagonal jitter in growing steps if needed.
fn lower_factor(mut c: DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    if let Some(ch) = c.clone().cholesky() {
        return Ok(ch.l());
    }
    let n = c.nrows();
    let mut added = 0.0;
    for e in -12..=-4 {
        let target = scale * 10f64.powi(e);
        for i in 0..n {
            c[(i, i)] += target - added;
        }
        added = target;
        if let Some(ch) = c.clone().cholesky() {
            log::warn!("simulation covariance needed jitter {target:.1e}");
            return Ok(ch.l());
        }
    }
    Err(Error::SingularBlock {
        row: 0,
        min_eigenvalue: c.symmetric_eigenvalues().min(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_given_seed() {
        let loc = LocationSet::unit_grid(2, 2);
        let k = KernelSpec::exponential(1.0, 19.97).unwrap();
        let a = simulate_gp(&k, 0.01, &loc, 100, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = simulate_gp(&k, 0.01, &loc, 100, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.y.len(), 4);
    }

    #[test]
    fn marginal_variance_includes_nugget() {
        let loc = LocationSet::unit_grid(3, 2);
        let k = KernelSpec::exponential(1.0, 19.97).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 10_000;
        let mut s2 = 0.0;
        for _ in 0..reps {
            let f = simulate_gp(&k, 0.01, &loc, 100, &mut rng).unwrap();
            s2 += f.y[4] * f.y[4];
        }
        let var = s2 / reps as f64;
        let truth = 1.01;
        assert!((var - truth).abs() < 3.0 * truth * (2.0 / reps as f64).sqrt(), "{var}");
    }

    #[test]
    fn zero_nugget_has_no_noise() {
        let loc = LocationSet::unit_grid(3, 1);
        let k = KernelSpec::exponential(1.0, 2.0).unwrap();
        let f = simulate_gp(&k, 0.0, &loc, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(f.y, f.z);
    }

    #[test]
    fn cap_enforced_and_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let loc = Layout::Grid { per_side: 4 }.locations(2, &mut rng).unwrap();
        assert_eq!(loc.len(), 16);
        let k = KernelSpec::exponential(1.0, 2.0).unwrap();
        assert!(simulate_gp(&k, 0.1, &loc, 10, &mut rng).is_err());
        let u = Layout::Uniform { n: 50 }.locations(3, &mut rng).unwrap();
        assert_eq!((u.len(), u.dim()), (50, 3));
        assert!(u.points().all(|p| p.iter().all(|&c| (0.0..1.0).contains(&c))));
    }

    #[test]
    fn smooth_kernel_gets_jitter() {
        let loc = LocationSet::unit_grid(15, 1);
        let k = KernelSpec::gaussian(1.0, 1.0).unwrap();
        assert!(simulate_gp(&k, 0.0, &loc, 100, &mut ChaCha8Rng::seed_from_u64(2)).is_ok());
    }
}
