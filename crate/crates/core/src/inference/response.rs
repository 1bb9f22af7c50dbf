use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::draws::{ModelKind, PosteriorDraws, PredictionDraw};
use super::latent::{initial_theta, x_times};
use super::mh::accept;
use super::{permute_rows, sample_beta_response, McmcConfig, PriorSpec, RegressionData, TestData, RobustAdaptiveMetropolis};
use crate::dag::{build_dag, RadialDag};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::partition::AlternatingPartition;
use crate::precision::{build_sparse_factor_with_nugget, SparseFactor};
use crate::predict::ResponsePredictor;

/// Log density of residuals `resid` (DAG position order) under the radial
/// neighbors approximation of `N(0, Sigma + sigma2 I)`:
/// `log det(Phi)/2 - resid^T Phi resid / 2 - n log(2 pi) / 2`.
pub fn marginal_loglik(
    dag: &RadialDag,
    k: &KernelSpec,
    sigma2: f64,
    resid: &[f64],
    jitter: f64,
) -> Result<f64> {
    build_sparse_factor_with_nugget(dag, k, sigma2, jitter)?.log_density(resid)
}

/// Components of the joint random-walk state `(log sigma2, log theta_0,
/// log theta_1)` that are sampled.
fn free_components(cfg: &McmcConfig) -> Vec<usize> {
    let mut c = Vec::new();
    if !cfg.fix_sigma2 {
        c.push(0);
    }
    if !cfg.fix_theta {
        c.extend([1, 2]);
    }
    c
}

fn log_prior(prior: &PriorSpec, sigma2: f64, theta: [f64; 2]) -> f64 {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return f64::NEG_INFINITY;
    }
    prior.sigma2.ln_density(sigma2) + prior.ln_theta(theta)
}

/// Sampler for `Y ~ N(X beta, Sigma + sigma2 I)` with the covariance replaced
/// by its radial neighbors approximation. Each sweep draws `beta` from its
/// conjugate conditional and then updates `(sigma2, theta)` jointly by a
/// robust adaptive random walk on the log scale. Adaptation stops at the
/// burn-in iteration `l2`.
pub fn run_response_mcmc(
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
        "response sampler: n = {n}, {} subsets, {} edges, max parents {}",
        partition.subset_count(),
        dag.edge_count(),
        dag.max_parents()
    );
    let order = dag.order().to_vec();
    let y: Vec<f64> = order.iter().map(|&i| data.y[i]).collect();
    let x = permute_rows(&data.x, &order);
    let mut predictor = match test {
        Some(t) if !t.locations.is_empty() => Some(ResponsePredictor::new(
            dag.ordered_locations().clone(),
            t.locations.clone(),
        )),
        _ => None,
    };

    let mut kernel_now = initial_theta(kernel, data, prior, cfg)?;
    let mut sigma2 = cfg.sigma2_init.unwrap_or_else(|| prior.sigma2.center());
    let mut factor = build_sparse_factor_with_nugget(&dag, &kernel_now, sigma2, cfg.jitter)?;
    let mut beta = vec![0.0; data.p()];

    let free = free_components(cfg);
    let mut ram = RobustAdaptiveMetropolis::new(free.len(), cfg.adaptive_initial_scale, cfg.target_acceptance);
    if !cfg.adapt {
        ram.freeze();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = PosteriorDraws::new(ModelKind::Response, kernel_now.clone(), cfg.l1, cfg.l2, cfg.seed, rho, cfg);

    for l in 1..=cfg.l1 {
        if l == cfg.l2 {
            ram.freeze();
        }
        (|| -> Result<()> {
            beta = draw_beta(&factor, &x, &y, prior, &mut rng)?;
            let xb = x_times(&x, &beta);
            let resid: Vec<f64> = y.iter().zip(&xb).map(|(a, b)| a - b).collect();
            if !free.is_empty() {
                let theta = kernel_now.theta();
                let cur = [sigma2.ln(), theta[0].ln(), theta[1].ln()];
                let ll = factor.log_density(&resid)?;
                let cur_target = ll + log_prior(prior, sigma2, theta) + cur.iter().sum::<f64>();
                let sub: Vec<f64> = free.iter().map(|&c| cur[c]).collect();
                let (prop_sub, u) = ram.propose(&sub, &mut rng);
                let mut prop = cur;
                for (&c, v) in free.iter().zip(&prop_sub) {
                    prop[c] = *v;
                }
                let (s2_new, th_new) = (prop[0].exp(), [prop[1].exp(), prop[2].exp()]);
                let mut alpha = 0.0;
                let mut outright = false;
                let mut candidate = None;
                if prop == cur {
                    alpha = 1.0;
                } else if log_prior(prior, s2_new, th_new) == f64::NEG_INFINITY {
                    outright = true;
                } else {
                    match kernel_now
                        .with_theta(th_new)
                        .and_then(|k| build_sparse_factor_with_nugget(&dag, &k, s2_new, cfg.jitter).map(|f| (k, f)))
                    {
                        Ok((k, f)) => {
                            let target = f.log_density(&resid)?
                                + log_prior(prior, s2_new, th_new)
                                + prop.iter().sum::<f64>();
                            alpha = (target - cur_target).exp().min(1.0);
                            candidate = Some((k, f));
                        }
                        Err(e) => {
                            debug!("proposal rejected: {e}");
                            outright = true;
                        }
                    }
                }
                let accepted = !outright && accept(alpha.ln(), &mut rng);
                if accepted {
                    if let Some((k, f)) = candidate {
                        kernel_now = k;
                        factor = f;
                        sigma2 = s2_new;
                    }
                }
                ram.adapt(&u, alpha);
                out.acceptance.record(accepted, outright, l >= cfg.l2);
            }
            out.beta.push(beta.clone());
            out.sigma2.push(sigma2);
            out.theta.push(kernel_now.theta());

            if cfg.keeps(l) {
                if let (Some(pred), Some(t)) = (predictor.as_mut(), test) {
                    let xb_test = x_times(&t.x, &beta);
                    let resid: Vec<f64> = y.iter().zip(&x_times(&x, &beta)).map(|(a, b)| a - b).collect();
                    let response = pred.sample(&kernel_now, sigma2, &factor, &resid, &xb_test, &mut rng)?;
                    let latent = response.iter().zip(&xb_test).map(|(a, b)| a - b).collect();
                    out.predictions.push(PredictionDraw {
                        iteration: l,
                        latent,
                        response,
                    });
                }
            }
            Ok(())
        })()
        .map_err(|e| e.at_iteration(l))?;
    }
    info!(
        "response sampler done: acceptance {:.3} (post burn-in {:.3})",
        out.acceptance.rate(),
        out.acceptance.post_burn_rate()
    );
    Ok(out)
}

fn draw_beta<R: Rng + ?Sized>(
    factor: &SparseFactor,
    x: &DMatrix<f64>,
    y: &[f64],
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = x.ncols();
    if p == 0 {
        return Ok(Vec::new());
    }
    let n = x.nrows();
    let mut phi_x = DMatrix::<f64>::zeros(n, p);
    for j in 0..p {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let v = factor.apply_precision(&col)?;
        phi_x.column_mut(j).copy_from_slice(&v);
    }
    let xt_phi_x = x.transpose() * &phi_x;
    let xt_phi_y = phi_x.transpose() * DVector::from_column_slice(y);
    sample_beta_response(&xt_phi_x, &xt_phi_y, &prior.beta, rng)
}
