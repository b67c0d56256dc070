use std::path::PathBuf;
use std::process::{Command, Output};

fn evglm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evglm")).args(args).output().expect("binary runs")
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("evglm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn json(out: &[u8]) -> serde_json::Value {
    serde_json::from_slice(out).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(out)))
}

fn fisher(v: &serde_json::Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v["fisher"].clone()).unwrap()
}

#[test]
fn info_closed_forms() {
    let out = evglm(&["info", "--family", "gpd", "--sigma", "1", "--xi", "0"]);
    assert!(out.status.success());
    assert_eq!(fisher(&json(&out.stdout)), vec![vec![1.0, 1.0], vec![1.0, 2.0]]);

    let out = evglm(&["info", "--family", "poisson", "--lambda", "2"]);
    assert!(out.status.success());
    assert_eq!(fisher(&json(&out.stdout)), vec![vec![0.5]]);
}

#[test]
fn info_gevd_at_zero_shape_is_a_singularity() {
    let out = evglm(&["info", "--family", "gevd", "--sigma", "1", "--xi", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stderr)["error"], "singularity");
}

#[test]
fn info_outside_domain_is_an_input_error() {
    let out = evglm(&["info", "--family", "gpd", "--sigma", "1", "--xi", "-0.7"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"], "domain");
}

#[test]
fn link_table_csv() {
    let out = evglm(&["link-table", "--link", "log", "--from", "-1", "--to", "1", "--points", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let mid: Vec<f64> = lines[2].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(mid, vec![0.0, 1.0, 1.0]);
}

#[test]
fn check_binomial_logit_passes() {
    let spec = scratch(
        "binomial.spec",
        "family = binomial\nm = 1\nlink = logit\nbeta = 0.3, -0.5\nregressors = const:1, std_normal\n",
    );
    let out = evglm(&["check", "--spec", spec.to_str().unwrap(), "--n-draws", "20000"]);
    let reports = json(&out.stdout);
    let verdicts: Vec<&str> = reports.as_array().unwrap().iter().map(|r| r["verdict"].as_str().unwrap()).collect();
    assert_eq!(verdicts, ["pass", "pass", "pass"], "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn check_poisson_design_counterexample() {
    let spec = scratch("poisson.spec", "family = poisson\nlink = identity\nbeta = 1\ndesign = inverse_n\n");
    let out = evglm(&["check", "--spec", spec.to_str().unwrap(), "--conditions", "feller,lindeberg"]);
    let reports = json(&out.stdout);
    let reports = reports.as_array().unwrap();
    assert_eq!(reports[0]["condition"], "feller");
    assert_eq!(reports[0]["verdict"], "pass");
    assert_eq!(reports[1]["condition"], "lindeberg");
    assert_eq!(reports[1]["verdict"], "fail");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_spec_reports_its_line() {
    let spec = scratch("bad.spec", "family = poisson\nlink = log\nbeta = 1, oops\n");
    let out = evglm(&["check", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = json(&out.stderr);
    assert_eq!(err["error"], "parse");
    assert_eq!(err["line"], 3);
}

#[test]
fn spec_fmt_is_idempotent() {
    let spec = scratch(
        "fmt.spec",
        "# comment\nfamily = gevd\nlink = log,shape_gevd_shifted\npartition = 1,1\nbeta = 0,1\nregressors = const:1, log_past:gevd:1:0.3:1\n",
    );
    let once = evglm(&["spec-fmt", spec.to_str().unwrap()]);
    assert!(once.status.success());
    let again = scratch("fmt2.spec", std::str::from_utf8(&once.stdout).unwrap());
    let twice = evglm(&["spec-fmt", again.to_str().unwrap()]);
    assert_eq!(once.stdout, twice.stdout);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--T", "300", "--seed", "7", "--beta-sigma", "0,0.5", "--beta-xi", "0,1", "--start", "2"];
    let a = evglm(&args);
    let b = evglm(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.starts_with(b"t,sigma,xi,x\n"));
    let summary = json(&a.stderr);
    assert_eq!(summary["summary"]["steps"], 300);
}

#[test]
fn simulate_with_zero_shape_coefficient_has_constant_shape() {
    let csv = std::env::temp_dir().join(format!("evglm-sim-{}.csv", std::process::id()));
    let out = evglm(&[
        "simulate",
        "--T",
        "200",
        "--beta-sigma",
        "0.3",
        "--beta-xi",
        "0",
        "--start",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let xis: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(xis.len(), 200);
    assert!(xis.iter().all(|x| *x == xis[0]));
    assert_eq!(json(&out.stdout)["summary"]["steps"], 200);
}

#[test]
fn fit_gaussian_identity_matches_least_squares() {
    let spec = scratch("ols.spec", "family = gauss_loc\nsd = 1\nlink = identity\nbeta = 0, 0\n");
    let xs: Vec<f64> = (0..40).map(|i| i as f64 / 10.0).collect();
    let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| 1.0 + 2.0 * x + ((i * 37 % 11) as f64 - 5.0) / 10.0).collect();
    let mut data = String::from("y,x1,x2\n");
    for (x, y) in xs.iter().zip(&ys) {
        data += &format!("{y},1,{x}\n");
    }
    let data = scratch("ols.csv", &data);
    let out = evglm(&["fit", "--spec", spec.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(&out.stdout);
    assert_eq!(fit["converged"], true);

    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let beta: Vec<f64> = serde_json::from_value(fit["beta"].clone()).unwrap();
    assert!((beta[0] - intercept).abs() < 1e-9, "{beta:?} vs {intercept}");
    assert!((beta[1] - slope).abs() < 1e-9, "{beta:?} vs {slope}");
}

#[test]
fn fit_rejects_empty_data() {
    let spec = scratch("empty.spec", "family = poisson\nlink = log\nbeta = 0\n");
    let data = scratch("empty.csv", "y,x1\n");
    let out = evglm(&["fit", "--spec", spec.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"], "data");
}

#[test]
fn schemas_are_valid_json() {
    for name in ["info", "check", "fit", "simulate", "error", "spec"] {
        let out = evglm(&["--json-schema", name]);
        assert!(out.status.success());
        assert!(json(&out.stdout)["$schema"].is_string(), "{name}");
    }
}
