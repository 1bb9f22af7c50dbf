use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_PROJECTIONS: usize = 200;

/// Squared 2-Wasserstein distance between two empirical distributions on the
/// line with the same number of atoms.
pub fn wasserstein_1d_squared(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!("sample sizes {} and {}", a.len(), b.len())));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_unstable_by(f64::total_cmp);
    y.sort_unstable_by(f64::total_cmp);
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / x.len() as f64)
}

/// Sliced 2-Wasserstein distance: the square root of the average squared
/// 1-D distance between the projections of `a` and `b` onto `n_projections`
/// uniform random directions. Projection `j` draws its direction from stream
/// `j` of a generator seeded with `seed`.
pub fn sliced_w2(a: &[Vec<f64>], b: &[Vec<f64>], n_projections: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    if n_projections == 0 {
        return Err(Error::InvalidConfig("at least one projection is needed".into()));
    }
    let dim = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!("sample sizes {} and {}", a.len(), b.len())));
    }
    let per: Vec<f64> = (0..n_projections)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let mut u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= norm);
            let proj = |s: &[Vec<f64>]| -> Vec<f64> {
                s.iter().map(|x| x.iter().zip(&u).map(|(p, q)| p * q).sum()).collect()
            };
            wasserstein_1d_squared(&proj(a), &proj(b))
        })
        .collect::<Result<_>>()?;
    Ok((per.iter().sum::<f64>() / n_projections as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_sets() {
        let a: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * i) as f64 * 0.01]).collect();
        assert_eq!(sliced_w2(&a, &a, 20, 1).unwrap(), 0.0);
    }

    #[test]
    fn one_dimension_reduces_to_sorted_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..300).map(|_| 2.0 * rng.random::<f64>() - 0.3).collect();
        // oracle: pair order statistics by explicit ranking
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
            idx.into_iter().map(|i| v[i]).collect::<Vec<_>>()
        };
        let (ra, rb) = (rank(&a), rank(&b));
        let oracle = (ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 300.0).sqrt();
        let va: Vec<Vec<f64>> = a.iter().map(|&x| vec![x]).collect();
        let vb: Vec<Vec<f64>> = b.iter().map(|&x| vec![x]).collect();
        for n_proj in [1, 7, 50] {
            let s = sliced_w2(&va, &vb, n_proj, 3).unwrap();
            assert!((s - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_gaussian_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut draw = |shift: f64| -> Vec<Vec<f64>> {
            (0..10_000)
                .map(|_| {
                    let x: f64 = rng.sample(StandardNormal);
                    let y: f64 = rng.sample(StandardNormal);
                    vec![x + shift, y]
                })
                .collect()
        };
        let a = draw(0.0);
        let b = draw(2.0);
        // E[(u^T delta)^2] = |delta|^2 / 2 for u uniform on the circle
        let s = sliced_w2(&a, &b, 500, 11).unwrap();
        assert!((s - 2.0 / 2f64.sqrt()).abs() < 0.05 * 2.0 / 2f64.sqrt(), "{s}");
    }

    #[test]
    fn deterministic_and_validated() {
        let a: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 1.0, -(i as f64)]).collect();
        let b: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64, 0.5]).collect();
        assert_eq!(sliced_w2(&a, &b, 30, 9).unwrap(), sliced_w2(&a, &b, 30, 9).unwrap());
        assert!(sliced_w2(&[], &b, 3, 1).is_err());
        assert!(sliced_w2(&a, &b[..10], 3, 1).is_err());
        assert!(sliced_w2(&a, &b, 0, 1).is_err());
    }
}
