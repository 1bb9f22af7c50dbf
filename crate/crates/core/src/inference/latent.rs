use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::draws::{ModelKind, PosteriorDraws, PredictionDraw};
use super::{
    mh_step_theta, permute_rows, sample_beta, sample_latent_cg, sample_sigma2,
    variogram_initial_theta, McmcConfig, PriorSpec, RegressionData, TestData,
};
use crate::dag::{build_dag, RadialDag};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::partition::AlternatingPartition;
use crate::precision::{build_sparse_factor, SparseFactor};
use crate::predict::{build_prediction_plan, ConditionalCache, PredictionPlan};

/// Current values of the latent-model chain. `z` is in DAG position order.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub kernel: KernelSpec,
    pub z: Vec<f64>,
    pub factor: SparseFactor,
    /// `log p(z | theta)` under `factor`.
    pub loglik: f64,
}

/// `log p(z | theta)` under the radial neighbors approximation, `z` in DAG
/// position order.
pub fn loglik_latent_given_theta(z: &[f64], dag: &RadialDag, k: &KernelSpec) -> Result<f64> {
    build_sparse_factor(dag, k, 0.0)?.log_density(z)
}

pub(crate) fn initial_theta(
    kernel: &KernelSpec,
    data: &RegressionData,
    prior: &PriorSpec,
    cfg: &McmcConfig,
) -> Result<KernelSpec> {
    let theta = match cfg.theta_init {
        Some(t) => t,
        None => {
            // variogram of the OLS residuals
            let resid = ols_residuals(&data.x, &data.y);
            let t = variogram_initial_theta(kernel, &data.locations, &resid);
            [prior.theta[0].clamp(t[0]), prior.theta[1].clamp(t[1])]
        }
    };
    debug!("initial theta {theta:?}");
    kernel.with_theta(theta)
}

fn ols_residuals(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    if x.ncols() == 0 {
        return y.to_vec();
    }
    let yv = DVector::from_column_slice(y);
    match (x.transpose() * x).cholesky() {
        Some(ch) => {
            let b = ch.solve(&(x.transpose() * &yv));
            (yv - x * b).iter().copied().collect()
        }
        None => y.to_vec(),
    }
}

pub(crate) fn x_times(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    if x.ncols() == 0 {
        return vec![0.0; x.nrows()];
    }
    (x * DVector::from_column_slice(beta)).iter().copied().collect()
}

pub(crate) fn prediction_plan(
    partition: &AlternatingPartition,
    test: Option<&TestData>,
    cfg: &McmcConfig,
) -> Result<Option<PredictionPlan>> {
    match test {
        Some(t) if !t.locations.is_empty() => Ok(Some(
            build_prediction_plan(partition, &t.locations, cfg.partition_seed.wrapping_add(1))?
                .with_jitter(cfg.jitter),
        )),
        _ => Ok(None),
    }
}

/// Gibbs sampler for `Y = X beta + Z + eps` with `Z` following the radial
/// neighbors approximation of `kernel`'s process over the training locations.
/// Each sweep updates `beta`, `sigma2`, `Z` (by a conjugate-gradient draw)
/// and the kernel variance and range (by a log-scale random walk), then draws
/// test predictions for retained iterations.
pub fn run_latent_mcmc(
    data: &RegressionData,
    prior: &PriorSpec,
    kernel: &KernelSpec,
    rho: f64,
    cfg: &McmcConfig,
    test: Option<&TestData>,
) -> Result<PosteriorDraws> {
    cfg.check()?;
    prior.check(data.p())?;
    if let Some(t) = test {
        if t.x.ncols() != data.p() {
            return Err(Error::InvalidData(format!(
                "test covariates have {} columns, training {}",
                t.x.ncols(),
                data.p()
            )));
        }
    }
    let n = data.n();
    let partition = AlternatingPartition::new(&data.locations, rho, cfg.partition_seed)?;
    let dag = build_dag(&partition, &data.locations)?;
    info!(
        "latent sampler: n = {n}, {} subsets, {} edges, max parents {}",
        partition.subset_count(),
        dag.edge_count(),
        dag.max_parents()
    );
    let order = dag.order().to_vec();
    let y: Vec<f64> = order.iter().map(|&i| data.y[i]).collect();
    let x = permute_rows(&data.x, &order);
    let plan = prediction_plan(&partition, test, cfg)?;
    let mut cache = ConditionalCache::new();

    let k0 = initial_theta(kernel, data, prior, cfg)?;
    let factor = build_sparse_factor(&dag, &k0, cfg.jitter)?;
    let z = vec![0.0; n];
    let loglik = factor.log_density(&z)?;
    let mut s = LatentState {
        beta: vec![0.0; data.p()],
        sigma2: cfg.sigma2_init.unwrap_or_else(|| prior.sigma2.center()),
        kernel: k0.clone(),
        z,
        factor,
        loglik,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = PosteriorDraws::new(ModelKind::Latent, k0, cfg.l1, cfg.l2, cfg.seed, rho, cfg);

    for l in 1..=cfg.l1 {
        sweep(&mut s, &x, &y, &dag, prior, cfg, l, &mut out, &mut rng).map_err(|e| e.at_iteration(l))?;
        if cfg.keeps(l) {
            if cfg.store_latent {
                let mut z_in = vec![0.0; n];
                for (pos, &i) in order.iter().enumerate() {
                    z_in[i] = s.z[pos];
                }
                out.latent.push((l, z_in));
            }
            if let (Some(plan), Some(t)) = (&plan, test) {
                let cond = cache.get(plan, &s.kernel).map_err(|e| e.at_iteration(l))?;
                let latent = plan.sample(cond, &s.z, &mut rng).map_err(|e| e.at_iteration(l))?;
                let xb = x_times(&t.x, &s.beta);
                let sd = s.sigma2.sqrt();
                let response = latent
                    .iter()
                    .zip(&xb)
                    .map(|(zt, m)| m + zt + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                out.predictions.push(PredictionDraw {
                    iteration: l,
                    latent,
                    response,
                });
            }
        }
    }
    info!(
        "latent sampler done: acceptance {:.3} (post burn-in {:.3})",
        out.acceptance.rate(),
        out.acceptance.post_burn_rate()
    );
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn sweep<R: Rng + ?Sized>(
    s: &mut LatentState,
    x: &DMatrix<f64>,
    y: &[f64],
    dag: &RadialDag,
    prior: &PriorSpec,
    cfg: &McmcConfig,
    l: usize,
    out: &mut PosteriorDraws,
    rng: &mut R,
) -> Result<()> {
    let resid: Vec<f64> = y.iter().zip(&s.z).map(|(a, b)| a - b).collect();
    s.beta = sample_beta(x, &resid, s.sigma2, &prior.beta, rng)?;
    let xb = x_times(x, &s.beta);

    if !cfg.fix_sigma2 {
        let r: Vec<f64> = (0..y.len()).map(|i| y[i] - xb[i] - s.z[i]).collect();
        s.sigma2 = sample_sigma2(&r, &prior.sigma2, rng);
    }

    let r: Vec<f64> = y.iter().zip(&xb).map(|(a, b)| a - b).collect();
    let cg = sample_latent_cg(&s.factor, &r, s.sigma2, &mut s.z, &cfg.cg, rng)?;
    out.cg_iterations.push(cg.iterations);
    s.loglik = s.factor.log_density(&s.z)?;

    if !cfg.fix_theta {
        let mh = mh_step_theta(
            &s.kernel,
            s.loglik,
            &s.z,
            dag,
            prior,
            cfg.proposal_scale,
            cfg.jitter,
            rng,
        )?;
        out.acceptance.record(mh.accepted, mh.rejected_outright, l >= cfg.l2);
        if let Some(f) = mh.factor {
            s.factor = f;
            s.kernel = s.kernel.with_theta(mh.theta)?;
            s.loglik = mh.loglik;
        }
    }

    out.beta.push(s.beta.clone());
    out.sigma2.push(s.sigma2);
    out.theta.push(s.kernel.theta());
    Ok(())
}
