use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use radgp::inference::{McmcConfig, PriorSpec, RegressionData};
use radgp::predict::{build_prediction_plan, response_predictive_moments};
use radgp::simulate::simulate_gp;
use radgp::{
    build_dag, build_sparse_factor_with_nugget, cov_matrix, cov_matrix_sym, run_latent_mcmc,
    run_response_mcmc, AlternatingPartition, KernelSpec, LocationSet,
};

/// Mean and batch-means standard error of a chain.
fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let batches = 20;
    let size = n / batches;
    let mean = x.iter().sum::<f64>() / n as f64;
    let bm: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let var = bm.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

#[test]
fn latent_and_response_samplers_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let set = LocationSet::unit_grid(8, 2);
    let k = KernelSpec::exponential(1.0, 6.0).unwrap();
    let field = simulate_gp(&k, 0.05, &set, 100, &mut rng).unwrap();
    let y: Vec<f64> = field.y.iter().map(|v| v + 1.5).collect();
    let data = RegressionData::new(DMatrix::from_element(64, 1, 1.0), y, set).unwrap();
    let prior = PriorSpec::simulation_default();
    let cfg = McmcConfig {
        l1: 30_000,
        l2: 5001,
        ..McmcConfig::default()
    };
    let rho = 0.3;
    let a = run_latent_mcmc(&data, &prior, &k, rho, &cfg, None).unwrap();
    let b = run_response_mcmc(&data, &prior, &k, rho, &cfg, None).unwrap();
    let burn = cfg.l2 - 1;
    let beta = |d: &radgp::PosteriorDraws| d.beta[burn..].iter().map(|v| v[0]).collect::<Vec<_>>();
    let traces = [
        ("beta", beta(&a), beta(&b)),
        ("tau2", a.parameter_trace(1), b.parameter_trace(1)),
        ("phi", a.parameter_trace(2), b.parameter_trace(2)),
    ];
    for (name, ta, tb) in traces {
        let (ma, sa) = mean_and_se(&ta);
        let (mb, sb) = mean_and_se(&tb);
        let se = (sa * sa + sb * sb).sqrt();
        assert!((ma - mb).abs() < 3.0 * se, "{name}: {ma} ({sa}) vs {mb} ({sb})");
    }
}

#[test]
fn nearby_test_points_keep_their_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let train = LocationSet::new((0..15).map(|_| vec![rng.random(), rng.random()]).collect()).unwrap();
    let test = LocationSet::new(vec![vec![0.5, 0.5], vec![0.53, 0.51]]).unwrap();
    let p = AlternatingPartition::new(&train, 0.3, 1).unwrap();
    let plan = build_prediction_plan(&p, &test, 2).unwrap();
    let k = KernelSpec::exponential(1.0, 3.0).unwrap();
    let cond = plan.conditionals(&k).unwrap();

    // dense oracle: compose the per-node conditionals given fixed training values
    let dag = plan.dag();
    let loc = dag.ordered_locations();
    let n = dag.len();
    let mut lin = DMatrix::<f64>::zeros(n, n);
    for pos in 15..n {
        let pa = dag.parents(pos);
        let pa_loc = loc.select(pa);
        let c = cov_matrix_sym(&k, &pa_loc);
        let cvec = cov_matrix(&k, &pa_loc, &loc.select(&[pos]));
        let b = if pa.is_empty() { DMatrix::zeros(0, 1) } else { c.cholesky().unwrap().solve(&cvec) };
        let d = k.variance() - (cvec.transpose() * &b).get((0, 0)).copied().unwrap_or(0.0);
        for (a, &q) in pa.iter().enumerate() {
            let row_q = lin.row(q).clone_owned();
            let mut row = lin.row_mut(pos);
            row += row_q * b[a];
        }
        lin[(pos, pos)] = d.sqrt();
    }
    let cov = &lin * lin.transpose();
    let (i, j) = (dag.position_of(15), dag.position_of(16));
    let oracle = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
    assert!(oracle.abs() > 0.1);

    let z: Vec<f64> = (0..15).map(|_| rng.sample(StandardNormal)).collect();
    let draws = 100_000;
    let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let v = plan.sample(&cond, &z, &mut rng).unwrap();
        s1 += v[0];
        s2 += v[1];
        s11 += v[0] * v[0];
        s22 += v[1] * v[1];
        s12 += v[0] * v[1];
    }
    let m = draws as f64;
    let c12 = s12 / m - s1 * s2 / (m * m);
    let corr = c12 / ((s11 / m - (s1 / m).powi(2)) * (s22 / m - (s2 / m).powi(2))).sqrt();
    assert!((corr - oracle).abs() < 0.1 * oracle.abs(), "{corr} vs {oracle}");
}

#[test]
fn response_predictive_mean_is_dense_product() {
    let set = LocationSet::new(vec![
        vec![0.1, 0.1],
        vec![0.4, 0.2],
        vec![0.3, 0.7],
        vec![0.8, 0.5],
        vec![0.6, 0.9],
    ])
    .unwrap();
    let test = LocationSet::new(vec![vec![0.5, 0.5]]).unwrap();
    let p = AlternatingPartition::new(&set, 0.45, 1).unwrap();
    let dag = build_dag(&p, &set).unwrap();
    let k = KernelSpec::exponential(1.0, 2.0).unwrap();
    let sigma2 = 0.2;
    let f = build_sparse_factor_with_nugget(&dag, &k, sigma2, 0.0).unwrap();
    let r = [0.3, -0.2, 0.5, 1.0, -0.7];
    let (mean, _) = response_predictive_moments(&k, sigma2, &f, dag.ordered_locations(), &test, &r).unwrap();
    let dense = cov_matrix(&k, &test, dag.ordered_locations()) * (f.precision_dense() * DVector::from_column_slice(&r));
    assert!((mean[0] - dense[0]).abs() < 1e-8);
}

#[test]
fn prediction_time_grows_linearly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let train = LocationSet::unit_grid(30, 2);
    let p = AlternatingPartition::new(&train, 0.08, 1).unwrap();
    let k = KernelSpec::exponential(1.0, 10.0).unwrap();
    let z: Vec<f64> = (0..900).map(|_| rng.sample(StandardNormal)).collect();
    let time = |m: usize, rng: &mut ChaCha8Rng| {
        let test = LocationSet::new((0..m).map(|_| vec![rng.random(), rng.random()]).collect()).unwrap();
        let plan = build_prediction_plan(&p, &test, 2).unwrap();
        let t0 = Instant::now();
        for _ in 0..5 {
            let cond = plan.conditionals(&k).unwrap();
            plan.sample(&cond, &z, rng).unwrap();
        }
        t0.elapsed().as_secs_f64()
    };
    time(200, &mut rng);
    let small = time(400, &mut rng);
    let large = time(1600, &mut rng);
    // 4x the test points at roughly fixed density, with generous slack
    assert!(large / small < 4.0 * 2.0 * 2.0, "{small} {large}");
}
