use std::io::Write;

use crate::error::{Error, Result};

/// Posterior summary at one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveSummary {
    pub location_index: usize,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, standard deviation and central `level` interval at each location,
/// from draws given as rows (`draw x location`). Quantiles interpolate
/// linearly between order statistics.
pub fn summarize_draws(draws: &[Vec<f64>], level: f64) -> Result<Vec<PredictiveSummary>> {
    if draws.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("interval level {level} outside (0, 1)")));
    }
    let m = draws[0].len();
    if let Some(r) = draws.iter().find(|r| r.len() != m) {
        return Err(Error::Misaligned(format!("draw of length {} among length {m}", r.len())));
    }
    let n = draws.len() as f64;
    let tail = (1.0 - level) / 2.0;
    Ok((0..m)
        .map(|j| {
            let mut col: Vec<f64> = draws.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = if draws.len() > 1 {
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            col.sort_unstable_by(f64::total_cmp);
            PredictiveSummary {
                location_index: j,
                mean,
                sd: var.sqrt(),
                lower: quantile(&col, tail),
                upper: quantile(&col, 1.0 - tail),
            }
        })
        .collect())
}

/// Mean squared error of the posterior means and the fraction of `truth`
/// values inside the intervals (endpoints included).
pub fn mse_and_coverage(truth: &[f64], summaries: &[PredictiveSummary]) -> Result<(f64, f64)> {
    if truth.len() != summaries.len() {
        return Err(Error::Misaligned(format!(
            "{} truth values for {} summaries",
            truth.len(),
            summaries.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some((i, s)) = summaries.iter().enumerate().find(|(i, s)| s.location_index != *i) {
        return Err(Error::Misaligned(format!(
            "summary {i} is for location {}",
            s.location_index
        )));
    }
    let n = truth.len() as f64;
    let mse = truth.iter().zip(summaries).map(|(t, s)| (t - s.mean).powi(2)).sum::<f64>() / n;
    let hits = truth
        .iter()
        .zip(summaries)
        .filter(|(t, s)| s.lower <= **t && **t <= s.upper)
        .count();
    Ok((mse, hits as f64 / n))
}

/// Writes `location_index,post_mean,post_sd,qLLL,qUUU` where the quantile
/// columns are named by their probabilities in thousandths.
pub fn write_summary_csv<W: Write>(writer: W, summaries: &[PredictiveSummary], level: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let tail = (1.0 - level) / 2.0;
    w.write_record([
        "location_index".to_string(),
        "post_mean".into(),
        "post_sd".into(),
        format!("q{:03}", (tail * 1000.0).round() as u32),
        format!("q{:03}", ((1.0 - tail) * 1000.0).round() as u32),
    ])?;
    for s in summaries {
        w.write_record([
            s.location_index.to_string(),
            format!("{:.16e}", s.mean),
            format!("{:.16e}", s.sd),
            format!("{:.16e}", s.lower),
            format!("{:.16e}", s.upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(i: usize, mean: f64, lower: f64, upper: f64) -> PredictiveSummary {
        PredictiveSummary {
            location_index: i,
            mean,
            sd: 0.0,
            lower,
            upper,
        }
    }

    #[test]
    fn perfect_summaries() {
        let truth = [1.0, 2.0, 3.0];
        let sums: Vec<_> = truth.iter().enumerate().map(|(i, &t)| s(i, t, t - 0.1, t + 0.1)).collect();
        assert_eq!(mse_and_coverage(&truth, &sums).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn zero_width_wrong_intervals() {
        let truth = [1.0, 2.0];
        let sums = vec![s(0, 0.0, 0.0, 0.0), s(1, 5.0, 5.0, 5.0)];
        assert_eq!(mse_and_coverage(&truth, &sums).unwrap().1, 0.0);
    }

    #[test]
    fn hand_computed_five_points() {
        let truth = [0.0, 1.0, 2.0, 3.0, 4.0];
        let sums = vec![
            s(0, 0.5, -1.0, 1.0),  // err 0.25, in
            s(1, 1.0, 1.5, 2.0),   // err 0, out
            s(2, 1.0, 0.0, 2.0),   // err 1, in (endpoint)
            s(3, 5.0, 4.0, 6.0),   // err 4, out
            s(4, 3.5, 3.0, 5.0),   // err 0.25, in
        ];
        let (mse, cov) = mse_and_coverage(&truth, &sums).unwrap();
        assert!((mse - 5.5 / 5.0).abs() < 1e-15);
        assert_eq!(cov, 0.6);
    }

    #[test]
    fn misalignment_rejected() {
        assert!(mse_and_coverage(&[1.0], &[]).is_err());
        assert!(mse_and_coverage(&[1.0], &[s(3, 0.0, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn summaries_of_uniform_draws() {
        // draws 0..=100 at location 0: quantiles fall on integers
        let draws: Vec<Vec<f64>> = (0..=100).map(|i| vec![i as f64, 1.0]).collect();
        let sum = summarize_draws(&draws, 0.95).unwrap();
        assert_eq!(sum[0].mean, 50.0);
        assert!((sum[0].lower - 2.5).abs() < 1e-12);
        assert!((sum[0].upper - 97.5).abs() < 1e-12);
        // sample variance of 0..=100 is 101 * 102 / 12
        assert!((sum[0].sd - 858.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(sum[1].sd, 0.0);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &sum, 0.95).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("location_index,post_mean,post_sd,q025,q975\n"));
        assert!(summarize_draws(&[], 0.95).is_err());
    }
}
