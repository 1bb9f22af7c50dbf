use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn radgp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radgp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = radgp(dir, args);
    assert!(
        out.status.success(),
        "radgp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

const TOY: &str = "x1,x2,y\n0.1,0.2,0.5\n0.4,0.3,-0.2\n0.8,0.9,1.1\n";

#[test]
fn toy_fit_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.csv"), TOY).unwrap();
    for cmd in ["fit-latent", "fit-response"] {
        ok(
            dir.path(),
            &[cmd, "--data.train", "toy.csv", "--rho", "0.5", "--mcmc.l1", "10", "--mcmc.l2", "6", "--out", cmd],
        );
        let rows = lines(&dir.path().join(cmd).join("params.csv"));
        assert_eq!(rows.len(), 11);
        assert_eq!(rows[0], "iteration,sigma2,theta_tau2,theta_phi");
    }
    assert_eq!(lines(&dir.path().join("fit-latent/latent.csv")).len(), 1 + 5 * 3);
}

#[test]
fn empty_test_file_gives_header_only_predictions() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.csv"), TOY).unwrap();
    fs::write(dir.path().join("empty.csv"), "x1,x2\n").unwrap();
    let fit = ["--data.train", "toy.csv", "--rho", "0.5", "--mcmc.l1", "8", "--mcmc.l2", "4"];
    ok(dir.path(), &[&["fit-latent", "--out", "fit", "--data.test", "empty.csv"][..], &fit].concat());
    for f in ["fit/predictions.csv", "fit/predictions_latent.csv"] {
        assert_eq!(lines(&dir.path().join(f)), vec!["iteration,location_index,value"]);
    }
    assert_eq!(lines(&dir.path().join("fit/summary.csv")).len(), 1);
    ok(
        dir.path(),
        &["predict", "--data.train", "toy.csv", "--data.test", "empty.csv", "--data.fit", "fit", "--out", "pred"],
    );
    assert_eq!(
        lines(&dir.path().join("pred/predictions.csv")),
        vec!["iteration,location_index,value"]
    );
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["simulate", "--simulate.per_side", "2", "--simulate.n_test", "3", "--seed", "42", "--out", out]
    };
    ok(dir.path(), &args("a"));
    ok(dir.path(), &args("b"));
    let a = fs::read(dir.path().join("a/train.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/train.csv")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a/test.csv")).unwrap(),
        fs::read(dir.path().join("b/test.csv")).unwrap()
    );
    let rows = lines(&dir.path().join("a/train.csv"));
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0], "x1,x2,y,z");
    ok(dir.path(), &["simulate", "--simulate.per_side", "2", "--simulate.n_test", "3", "--seed", "43", "--out", "c"]);
    assert_ne!(a, fs::read(dir.path().join("c/train.csv")).unwrap());
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let body: Vec<&str> = err.lines().filter(|l| l.starts_with("error: ")).collect();
    assert_eq!(body.len(), 1, "stderr: {err}");
    body[0].to_string()
}

#[test]
fn errors_are_single_machine_readable_lines() {
    let dir = tempfile::tempdir().unwrap();
    let line = error_line(&radgp(dir.path(), &["fit-latent", "--data.train", "missing.csv"]));
    assert!(line.starts_with("error: module=config message="), "{line}");

    let line = error_line(&radgp(dir.path(), &["fit-latent", "--mcmc.nonsense", "1"]));
    assert!(line.contains("unknown option mcmc.nonsense"), "{line}");

    let out = radgp(
        dir.path(),
        &["simulate", "--simulate.per_side", "5", "--simulate.n_test", "0", "--simulate.max_dense", "10"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out).starts_with("error: module=precision message="));

    fs::write(dir.path().join("bad.csv"), "x1,x2,y\n0.1,0.2,oops\n").unwrap();
    let line = error_line(&radgp(dir.path(), &["partition", "--data.train", "bad.csv", "--rho", "0.3"]));
    assert!(line.starts_with("error: module=io message="), "{line}");

    let out = radgp(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).starts_with("error: module=cli message="));
}

#[test]
fn simulate_fit_predict_diagnose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--simulate.per_side", "8", "--simulate.n_test", "12", "--seed", "5", "--out", "sim"]);
    fs::write(
        d.join("run.ini"),
        "[data]\ntrain = sim/train.csv\ntest = sim/test.csv\n\n[model]\nrho = 0.3\n\n[mcmc]\nl1 = 60\nl2 = 41\n",
    )
    .unwrap();
    ok(d, &["fit-latent", "--config", "run.ini", "--out", "fit"]);
    ok(d, &["fit-latent", "--config", "run.ini", "--out", "again"]);
    for f in ["params.csv", "latent.csv", "predictions.csv", "summary.csv", "metadata.txt"] {
        assert_eq!(
            fs::read(d.join("fit").join(f)).unwrap(),
            fs::read(d.join("again").join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
    assert_eq!(lines(&d.join("fit/predictions.csv")).len(), 1 + 20 * 12);

    ok(d, &["predict", "--config", "run.ini", "--data.fit", "fit", "--out", "pred"]);
    assert_eq!(lines(&d.join("pred/predictions.csv")).len(), 1 + 20 * 12);
    assert_eq!(lines(&d.join("pred/summary.csv"))[0], "location_index,post_mean,post_sd,q025,q975");

    ok(
        d,
        &[
            "diagnose",
            "--config",
            "run.ini",
            "--data.predictions",
            "pred/predictions.csv",
            "--data.truth",
            "sim/test.csv",
            "--diagnose.rho",
            "0.2,0.4",
            "--out",
            "diag",
        ],
    );
    let pred = lines(&d.join("diag/predictive.csv"));
    assert_eq!(pred[0], "metric,value");
    let coverage: f64 = pred[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&coverage));
    assert_eq!(lines(&d.join("diag/sliced_w2.csv")).len(), 2);
    let w2 = lines(&d.join("diag/w2.csv"));
    assert_eq!(w2.len(), 3);
    let w2_at = |row: &str| -> f64 { row.split(',').nth(2).unwrap().parse().unwrap() };
    assert!(w2_at(&w2[2]) <= w2_at(&w2[1]));

    ok(d, &["partition", "--config", "run.ini", "--out", "part"]);
    assert_eq!(lines(&d.join("part/partition.csv")).len(), 1 + 64);
}

#[test]
fn response_chain_predicts_after_the_fact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--simulate.per_side", "6", "--simulate.n_test", "5", "--seed", "8", "--out", "sim"]);
    let common = [
        "--data.train", "sim/train.csv", "--data.test", "sim/test.csv", "--rho", "0.3", "--mcmc.l1", "20", "--mcmc.l2",
        "11", "--model.intercept", "true",
    ];
    ok(d, &[&["fit-response", "--out", "fit"][..], &common].concat());
    assert!(lines(&d.join("fit/params.csv"))[0].starts_with("iteration,beta_0,sigma2"));
    ok(d, &[&["predict", "--data.fit", "fit", "--out", "pred"][..], &common].concat());
    assert_eq!(lines(&d.join("pred/predictions.csv")).len(), 1 + 10 * 5);
}
