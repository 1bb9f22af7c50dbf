use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use radgp::inference::{AcceptanceStats, ModelKind, PosteriorDraws};
use radgp::io::{read_column, read_draws_csv, read_params_csv, read_test_csv, read_training_csv};
use radgp::metrics::{mse_and_coverage, sliced_w2, summarize_draws, w2_report_capped, write_comparison_csv, write_summary_csv, ColumnBound};
use radgp::simulate::{simulate_gp, Layout};
use radgp::{
    build_dag, cov_matrix, cov_matrix_sym, predict_from_draws, recommend_radius, AlternatingPartition, Family,
    KernelSpec, LocationSet, RegressionData, TestData,
};

use crate::config::{parse_regions, Config};
use crate::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn create(cfg: &Config, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = cfg.out_dir().join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    out.columns_mut(1, x.ncols()).copy_from(x);
    out
}

fn load_training(path: &Path, intercept: bool) -> Result<RegressionData, CliError> {
    let mut d = read_training_csv(open(path)?)?;
    if intercept {
        d.x = with_intercept(&d.x);
    }
    Ok(d)
}

fn load_test(path: &Path, intercept: bool) -> Result<TestData, CliError> {
    let mut t = read_test_csv(open(path)?)?;
    if intercept {
        t.x = with_intercept(&t.x);
    }
    Ok(t)
}

fn resolve_rho(value: &str, k: &KernelSpec, loc: &LocationSet) -> Result<f64, CliError> {
    if value != "auto" {
        let rho: f64 = value
            .parse()
            .map_err(|_| CliError::new("config", format!("model.rho must be a number or auto, got {value:?}")))?;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(radgp::Error::InvalidRadius(rho).into());
        }
        return Ok(rho);
    }
    let q = loc.min_separation()?;
    let rho = recommend_radius(k, q, loc.len(), loc.dim())?;
    info!("recommended radius {rho:.6e} (separation {q:.6e}, n = {})", loc.len());
    let diam = loc.diameter();
    if rho > diam {
        warn!("recommended radius {rho:.3e} exceeds the domain diameter {diam:.3e}; the DAG is complete");
    }
    Ok(rho)
}

pub fn simulate(cfg: &Config) -> Result<(), CliError> {
    let k = cfg.kernel()?;
    let sigma: f64 = cfg.get("simulate.sigma")?;
    let dim: usize = cfg.get("simulate.dim")?;
    let layout = match cfg.opt_str("simulate.layout").unwrap_or("grid") {
        "grid" => Layout::Grid {
            per_side: cfg.get("simulate.per_side")?,
        },
        "uniform" => Layout::Uniform {
            n: cfg.get("simulate.n")?,
        },
        other => {
            return Err(CliError::new(
                "config",
                format!("simulate.layout must be grid or uniform, got {other:?}"),
            ))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.get("run.seed")?);
    let train = layout.locations(dim, &mut rng)?;
    let test = Layout::Uniform {
        n: cfg.get("simulate.n_test")?,
    }
    .locations(dim, &mut rng)?;
    let all = train.concat(&test)?;
    let field = simulate_gp(&k, sigma * sigma, &all, cfg.get("simulate.max_dense")?, &mut rng)?;
    let n = train.len();
    let data = RegressionData::without_covariates(field.y[..n].to_vec(), train)?;
    radgp::io::write_training_csv(create(cfg, "train.csv")?, &data, &[("z", &field.z[..n])])?;
    let test = TestData::without_covariates(test);
    radgp::io::write_test_csv(
        create(cfg, "test.csv")?,
        &test,
        &[("y", &field.y[n..]), ("z", &field.z[n..])],
    )?;
    info!("simulated {n} training and {} test locations", test.locations.len());
    Ok(())
}

fn write_predictions(cfg: &Config, draws: &PosteriorDraws, m: usize, level: f64) -> Result<(), CliError> {
    draws.write_predictions_csv(create(cfg, "predictions.csv")?, true)?;
    draws.write_predictions_csv(create(cfg, "predictions_latent.csv")?, false)?;
    let summaries = if m == 0 || draws.predictions.is_empty() {
        Vec::new()
    } else {
        summarize_draws(&draws.prediction_matrix(true), level)?
    };
    write_summary_csv(create(cfg, "summary.csv")?, &summaries, level)?;
    Ok(())
}

pub fn fit(cfg: &Config, model: ModelKind) -> Result<(), CliError> {
    let intercept: bool = cfg.get("model.intercept")?;
    let train_path = cfg.input("data.train")?;
    let test_path = cfg.optional_input("data.test")?;
    let data = load_training(&train_path, intercept)?;
    let test = test_path.as_deref().map(|p| load_test(p, intercept)).transpose()?;
    let kernel = cfg.kernel()?;
    let prior = cfg.prior(data.p())?;
    let mcmc = cfg.mcmc(&kernel)?;
    let level: f64 = cfg.get("predict.level")?;
    let rho = resolve_rho(cfg.opt_str("model.rho").unwrap_or("auto"), &kernel, &data.locations)?;

    let draws = match model {
        ModelKind::Latent => radgp::run_latent_mcmc(&data, &prior, &kernel, rho, &mcmc, test.as_ref())?,
        ModelKind::Response => radgp::run_response_mcmc(&data, &prior, &kernel, rho, &mcmc, test.as_ref())?,
    };
    draws.write_params_csv(create(cfg, "params.csv")?)?;
    let mut meta = create(cfg, "metadata.txt")?;
    draws.write_metadata(&mut meta)?;
    writeln!(meta, "partition_seed = {}", mcmc.partition_seed)?;
    writeln!(meta, "jitter = {:.16e}", mcmc.jitter)?;
    writeln!(meta, "intercept = {intercept}")?;
    meta.flush()?;
    if model == ModelKind::Latent && mcmc.store_latent {
        draws.write_latent_csv(create(cfg, "latent.csv")?)?;
    }
    if let Some(t) = &test {
        write_predictions(cfg, &draws, t.locations.len(), level)?;
    }
    info!(
        "{} chain finished: {} iterations, acceptance {:.3}",
        model.name(),
        draws.len(),
        draws.acceptance.rate()
    );
    Ok(())
}

fn read_metadata(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for line in open(path)?.lines() {
        let line = line?;
        if let Some((k, v)) = line.split_once('=') {
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(out)
}

fn meta_value<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T, CliError> {
    meta.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::new("io", format!("metadata: missing or invalid {key}")))
}

pub fn predict(cfg: &Config) -> Result<(), CliError> {
    let train_path = cfg.input("data.train")?;
    let test_path = cfg.input("data.test")?;
    let fit_dir = cfg.input("data.fit")?;
    let meta = read_metadata(&fit_dir.join("metadata.txt"))?;
    let model = match meta.get("model").map(String::as_str) {
        Some("latent") => ModelKind::Latent,
        Some("response") => ModelKind::Response,
        _ => return Err(CliError::new("io", "metadata: missing or invalid model")),
    };
    let intercept: bool = meta_value(&meta, "intercept")?;
    let data = load_training(&train_path, intercept)?;
    let test = load_test(&test_path, intercept)?;

    let family: Family = meta_value::<String>(&meta, "kernel")?.parse()?;
    let params: Vec<f64> = meta
        .get("kernel_params")
        .map(|v| v.trim_matches(|c| c == '[' || c == ']'))
        .ok_or_else(|| CliError::new("io", "metadata: missing kernel_params"))?
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::new("io", "metadata: invalid kernel_params"))?;
    let rows = read_params_csv(open(&fit_dir.join("params.csv"))?)?;
    let latent = match model {
        ModelKind::Latent => {
            let path = fit_dir.join("latent.csv");
            if !path.exists() {
                return Err(CliError::new(
                    "config",
                    format!("{} not found; refit with mcmc.store_latent = true", path.display()),
                ));
            }
            read_draws_csv(open(&path)?)?
        }
        ModelKind::Response => Vec::new(),
    };
    let mut draws = PosteriorDraws {
        model,
        kernel: KernelSpec::from_params(family, &params)?,
        beta: rows.beta,
        sigma2: rows.sigma2,
        theta: rows.theta,
        latent,
        predictions: Vec::new(),
        l1: meta_value(&meta, "l1")?,
        l2: meta_value(&meta, "l2")?,
        seed: meta_value(&meta, "seed")?,
        rho: meta_value(&meta, "rho")?,
        acceptance: AcceptanceStats::default(),
        cg_iterations: Vec::new(),
        config_hash: 0,
    };
    if draws.len() != draws.l1 {
        return Err(CliError::new(
            "io",
            format!("params.csv has {} rows, metadata says {}", draws.len(), draws.l1),
        ));
    }
    let partition_seed: u64 = meta_value(&meta, "partition_seed")?;
    let jitter: f64 = meta_value(&meta, "jitter")?;
    let seed: u64 = cfg.get("run.seed")?;
    draws.predictions = predict_from_draws(&data, &test, &draws, partition_seed, jitter, seed)?;
    write_predictions(cfg, &draws, test.locations.len(), cfg.get("predict.level")?)?;
    info!("{} prediction draws at {} locations", draws.predictions.len(), test.locations.len());
    Ok(())
}

/// Lower factor of a covariance, clamping negative eigenvalues if Cholesky
/// fails.
fn root(cov: DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = cov.clone().cholesky() {
        return ch.l();
    }
    let eig = cov.symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(j).scale_mut(lam.max(0.0).sqrt());
    }
    v
}

/// Draws of the exact Gaussian process predictive law of noisy responses at
/// the test locations given zero-mean training responses.
struct ExactPredictive {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl ExactPredictive {
    fn new(k: &KernelSpec, sigma2: f64, train: &RegressionData, test: &LocationSet, cap: usize) -> Result<Self, CliError> {
        let n = train.n();
        if n > cap {
            return Err(radgp::Error::DiagnosticCap { n, cap }.into());
        }
        let mut s11 = cov_matrix_sym(k, &train.locations);
        for i in 0..n {
            s11[(i, i)] += sigma2;
        }
        let ch = s11
            .cholesky()
            .ok_or_else(|| CliError::new("metrics", "training covariance is not positive definite"))?;
        let s12 = cov_matrix(k, &train.locations, test);
        let y = DVector::from_column_slice(&train.y);
        let mean = s12.transpose() * ch.solve(&y);
        let w = ch.l().solve_lower_triangular(&s12).expect("cholesky factor is invertible");
        let mut cov = cov_matrix_sym(k, test) - w.transpose() * w;
        for i in 0..test.len() {
            cov[(i, i)] += sigma2;
        }
        Ok(ExactPredictive { mean, cov })
    }

    fn sample(&self, idx: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let m = idx.len();
        let r = root(DMatrix::from_fn(m, m, |a, b| self.cov[(idx[a], idx[b])]));
        (0..count)
            .map(|_| {
                let e = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &r * e;
                (0..m).map(|a| self.mean[idx[a]] + x[a]).collect()
            })
            .collect()
    }
}

pub fn diagnose(cfg: &Config) -> Result<(), CliError> {
    let train_path = cfg.optional_input("data.train")?;
    let test_path = cfg.optional_input("data.test")?;
    let pred_path = cfg.optional_input("data.predictions")?;
    let truth_path = cfg.optional_input("data.truth")?;
    let cap: usize = cfg.get("diagnose.cap")?;
    let seed: u64 = cfg.get("run.seed")?;
    let k = cfg.kernel()?;
    let predictions: Option<Vec<Vec<f64>>> = pred_path
        .as_deref()
        .map(|p| -> Result<_, CliError> {
            Ok(read_draws_csv(open(p)?)?.into_iter().map(|(_, v)| v).collect())
        })
        .transpose()?;
    let mut wrote = Vec::new();

    if let (Some(draws), Some(truth_path)) = (&predictions, &truth_path) {
        let level: f64 = cfg.get("diagnose.level")?;
        let truth = read_column(open(truth_path)?, cfg.opt_str("diagnose.truth_column").unwrap_or("y"))?;
        let summaries = summarize_draws(draws, level)?;
        let (mse, coverage) = mse_and_coverage(&truth, &summaries)?;
        let mut w = csv::Writer::from_writer(create(cfg, "predictive.csv")?);
        w.write_record(["metric", "value"]).map_err(radgp::Error::from)?;
        for (name, v) in [("mse", mse), ("coverage", coverage)] {
            w.write_record([name, &format!("{v:.16e}")]).map_err(radgp::Error::from)?;
        }
        w.flush()?;
        info!("mse {mse:.6}, coverage {coverage:.4}");
        wrote.push("predictive.csv");
    }

    let train = match &train_path {
        Some(p) => Some(load_training(p, false)?),
        None => None,
    };

    if let (Some(draws), Some(train), Some(test_path)) = (&predictions, &train, &test_path) {
        let test = load_test(test_path, false)?;
        let sigma2: f64 = cfg.get("diagnose.sigma2")?;
        let n_proj: usize = cfg.get("diagnose.projections")?;
        let exact = ExactPredictive::new(&k, sigma2, train, &test.locations, cap)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for region in parse_regions(cfg.opt_str("diagnose.regions").unwrap_or(""), test.locations.dim())? {
            let idx: Vec<usize> = (0..test.locations.len())
                .filter(|&i| region.contains(test.locations.point(i)))
                .collect();
            if idx.is_empty() || draws.is_empty() {
                warn!("region {} has no test locations or draws; skipped", region.name);
                continue;
            }
            let ours: Vec<Vec<f64>> = draws.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
            let reference = exact.sample(&idx, ours.len(), &mut rng);
            let v = sliced_w2(&ours, &reference, n_proj, seed)?;
            info!("region {}: sliced W2 {v:.6}", region.name);
            rows.push((region.name.clone(), "radgp".to_string(), v));
        }
        write_comparison_csv(create(cfg, "sliced_w2.csv")?, &rows)?;
        wrote.push("sliced_w2.csv");
    }

    if let Some(train) = &train {
        let n = train.n().min(cap);
        if n < train.n() {
            warn!("W2 report restricted to the first {n} of {} training locations", train.n());
        }
        let idx: Vec<usize> = (0..n).collect();
        let loc = train.locations.select(&idx);
        let rhos = match cfg.opt_str("diagnose.rho") {
            Some(_) => cfg.list("diagnose.rho")?,
            None => vec![resolve_rho(cfg.opt_str("model.rho").unwrap_or("auto"), &k, &loc)?],
        };
        let partition_seed: u64 = cfg.get("mcmc.partition_seed")?;
        let mut w = csv::Writer::from_writer(create(cfg, "w2.csv")?);
        w.write_record(["rho", "n", "w2_squared", "trace_bound", "column_bound", "column_hypothesis"])
            .map_err(radgp::Error::from)?;
        for rho in rhos {
            let p = AlternatingPartition::new(&loc, rho, partition_seed)?;
            let dag = build_dag(&p, &loc)?;
            let r = w2_report_capped(&dag, &k, cap)?;
            let (col, hyp) = match r.column_bound {
                ColumnBound::Met(v) => (format!("{v:.16e}"), "met"),
                ColumnBound::Unmet { .. } => (String::new(), "unmet"),
            };
            w.write_record([
                format!("{rho:.16e}"),
                n.to_string(),
                format!("{:.16e}", r.w2_squared),
                format!("{:.16e}", r.trace_bound),
                col,
                hyp.to_string(),
            ])
            .map_err(radgp::Error::from)?;
        }
        w.flush()?;
        wrote.push("w2.csv");
    }

    if wrote.is_empty() {
        return Err(CliError::new(
            "config",
            "diagnose needs data.train, or data.predictions with data.truth",
        ));
    }
    info!("wrote {}", wrote.join(", "));
    Ok(())
}

pub fn partition(cfg: &Config) -> Result<(), CliError> {
    let train: PathBuf = cfg.input("data.train")?;
    let data = load_training(&train, false)?;
    let k = cfg.kernel()?;
    let rho = resolve_rho(cfg.opt_str("model.rho").unwrap_or("auto"), &k, &data.locations)?;
    let p = AlternatingPartition::new(&data.locations, rho, cfg.get("mcmc.partition_seed")?)?;
    let dag = build_dag(&p, &data.locations)?;
    p.write_csv(create(cfg, "partition.csv")?)?;
    dag.write_csv(create(cfg, "dag.csv")?)?;
    info!(
        "{} subsets, {} edges, max parents {}",
        p.subset_count(),
        dag.edge_count(),
        dag.max_parents()
    );
    Ok(())
}
