//! Starting values for the kernel parameters.

use crate::geometry::{distance, LocationSet};
use crate::kernels::KernelSpec;

const MAX_POINTS: usize = 1500;

/// Method-of-moments start for the kernel variance and range: the empirical
/// semivariogram of `values` at two lags fixes the range through the ratio
/// of the two semivariances, then the variance from the longer lag.
pub fn variogram_initial_theta(kernel: &KernelSpec, locations: &LocationSet, values: &[f64]) -> [f64; 2] {
    let n = values.len().min(locations.len()).min(MAX_POINTS);
    let mean = values[..n].iter().sum::<f64>() / n.max(1) as f64;
    let var = values[..n].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let fallback = [var.max(1e-8), kernel.theta()[1]];
    if n < 3 {
        return fallback;
    }

    // typical spacing: median nearest-neighbor distance
    let mut nn: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| distance(locations.point(i), locations.point(j)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let h0 = nn[n / 2];
    let lags = [2.0 * h0, 6.0 * h0];
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for i in 0..n {
        for j in 0..i {
            let d = distance(locations.point(i), locations.point(j));
            for b in 0..2 {
                if (d - lags[b]).abs() <= 0.25 * lags[b] {
                    sums[b] += 0.5 * (values[i] - values[j]).powi(2);
                    counts[b] += 1;
                }
            }
        }
    }
    if counts.contains(&0) {
        return fallback;
    }
    let g = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
    if !(g[0] > 0.0 && g[1] > 0.0) {
        return fallback;
    }

    let ratio = |ln_range: f64| -> Option<f64> {
        let k = kernel.with_theta([1.0, ln_range.exp()]).ok()?;
        let a = 1.0 - k.eval(lags[0]);
        let b = 1.0 - k.eval(lags[1]);
        (b > 0.0).then(|| a / b)
    };
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    let (Some(r_lo), Some(r_hi)) = (ratio(lo), ratio(hi)) else {
        return fallback;
    };
    let target = g[0] / g[1];
    let (min_r, max_r) = (r_lo.min(r_hi), r_lo.max(r_hi));
    if !(target > min_r && target < max_r) {
        return fallback;
    }
    let increasing = r_hi > r_lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let Some(r) = ratio(mid) else { return fallback };
        if (r < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let range = (0.5 * (lo + hi)).exp();
    let k = match kernel.with_theta([1.0, range]) {
        Ok(k) => k,
        Err(_) => return fallback,
    };
    let variance = g[1] / (1.0 - k.eval(lags[1]));
    if variance.is_finite() && variance > 0.0 {
        [variance, range]
    } else {
        fallback
    }
}
