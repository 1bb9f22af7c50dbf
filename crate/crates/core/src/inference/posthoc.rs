use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::draws::{ModelKind, PosteriorDraws, PredictionDraw};
use super::latent::x_times;
use super::{permute_rows, RegressionData, TestData};
use crate::dag::build_dag;
use crate::error::{Error, Result};
use crate::partition::AlternatingPartition;
use crate::precision::build_sparse_factor_with_nugget;
use crate::predict::{build_prediction_plan, sample_prediction, ResponsePredictor};

/// Test draws from a finished chain, one per retained iteration.
///
/// Latent-model chains need `draws.latent`; response-model chains use every
/// iteration from `draws.l2` on. `partition_seed` must be the one the chain
/// was run with, so the training DAG is rebuilt identically.
pub fn predict_from_draws(
    data: &RegressionData,
    test: &TestData,
    draws: &PosteriorDraws,
    partition_seed: u64,
    jitter: f64,
    seed: u64,
) -> Result<Vec<PredictionDraw>> {
    if test.x.ncols() != data.p() {
        return Err(Error::InvalidData(format!(
            "test covariates have {} columns, training {}",
            test.x.ncols(),
            data.p()
        )));
    }
    if test.locations.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partition = AlternatingPartition::new(&data.locations, draws.rho, partition_seed)?;
    match draws.model {
        ModelKind::Latent => {
            let plan = build_prediction_plan(&partition, &test.locations, partition_seed.wrapping_add(1))?
                .with_jitter(jitter);
            let latent = sample_prediction(&plan, draws, &mut rng)?;
            let mut out = Vec::with_capacity(latent.len());
            for (iteration, z) in latent {
                let l = iteration - 1;
                let xb = x_times(&test.x, &draws.beta[l]);
                let sd = draws.sigma2[l].sqrt();
                let response = z
                    .iter()
                    .zip(&xb)
                    .map(|(zt, m)| m + zt + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                out.push(PredictionDraw {
                    iteration,
                    latent: z,
                    response,
                });
            }
            Ok(out)
        }
        ModelKind::Response => {
            let dag = build_dag(&partition, &data.locations)?;
            let order = dag.order().to_vec();
            let y: Vec<f64> = order.iter().map(|&i| data.y[i]).collect();
            let x = permute_rows(&data.x, &order);
            let mut predictor = ResponsePredictor::new(dag.ordered_locations().clone(), test.locations.clone());
            let start = draws.l2.max(1) - 1;
            if start >= draws.len() {
                return Err(Error::EmptySamples);
            }
            let mut out = Vec::with_capacity(draws.len() - start);
            let mut cached: Option<([f64; 2], f64, crate::precision::SparseFactor)> = None;
            for l in start..draws.len() {
                let (theta, s2) = (draws.theta[l], draws.sigma2[l]);
                let k = draws.kernel.with_theta(theta)?;
                if cached.as_ref().map(|c| (c.0, c.1)) != Some((theta, s2)) {
                    let f = build_sparse_factor_with_nugget(&dag, &k, s2, jitter).map_err(|e| e.at_iteration(l + 1))?;
                    cached = Some((theta, s2, f));
                }
                let factor = &cached.as_ref().expect("filled above").2;
                let beta = &draws.beta[l];
                let resid: Vec<f64> = y.iter().zip(&x_times(&x, beta)).map(|(a, b)| a - b).collect();
                let xb_test = x_times(&test.x, beta);
                let response = predictor.sample(&k, s2, factor, &resid, &xb_test, &mut rng)?;
                let latent = response.iter().zip(&xb_test).map(|(a, b)| a - b).collect();
                out.push(PredictionDraw {
                    iteration: l + 1,
                    latent,
                    response,
                });
            }
            Ok(out)
        }
    }
}
