use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use nalgebra::DVector;

use pogit::cli::{curve_file_name, CompareOutput, FitReport, SWEEP_FILE, SWEEP_HEADER};
use pogit::simulate::{Quantity, Variant};
use pogit::splines::{second_derivative_map, uniform_grid, SplineSpec};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn pogit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pogit"))
        .args(args)
        .output()
        .expect("pogit binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_report(p: &Path) -> FitReport {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn fit_matches_golden_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let run = pogit(&[
        "fit",
        "--config",
        path(&fixture("two_covariate.json")),
        "--data",
        path(&fixture("two_covariate.csv")),
        "--out",
        path(&out),
    ]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let got = read_report(&out);
    let golden = read_report(&fixture("two_covariate_fit.golden.json"));
    assert!(got.converged);
    assert!(got.warnings.is_empty());
    assert_eq!(got.meta, golden.meta);
    for (a, b) in got.coefficients.iter().zip(&golden.coefficients) {
        assert_eq!(a.name, b.name);
        assert!(
            (a.estimate - b.estimate).abs() < 1e-8,
            "{}: {} vs {}",
            a.name,
            a.estimate,
            b.estimate
        );
    }
    // n = 1000 draws at theta = (1, 1)
    for c in &got.coefficients {
        assert!(
            (c.estimate - 1.0).abs() < 4.0 * c.std_error.unwrap(),
            "{c:?}"
        );
    }
    let rows = got.intervals.unwrap();
    assert_eq!(rows.len(), 1000);
    for r in &rows {
        assert!(r.p.lo <= r.p.estimate && r.p.estimate <= r.p.hi);
        assert!(r.mu.lo >= 0.0 && r.p.hi <= 1.0);
    }
    let cov = got.covariance.unwrap();
    assert_eq!(cov.names, vec!["lambda.x_lambda", "p.x_p"]);
    assert_eq!(cov.sandwich[0][1], cov.sandwich[1][0]);
}

#[test]
fn shared_covariate_config_warns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let run = pogit(&[
        "fit",
        "--config",
        path(&fixture("overlap.json")),
        "--data",
        path(&fixture("two_covariate.csv")),
        "--out",
        path(&out),
    ]);
    assert_ne!(run.status.code(), Some(1));
    let report = read_report(&out);
    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains("unidentifiable"));
    assert!(String::from_utf8_lossy(&run.stderr).contains("unidentifiable"));

    // a sign constraint on the p slope settles it
    let text = fs::read_to_string(fixture("overlap.json")).unwrap().replace(
        "\"seed\": 7",
        "\"constraints\": [{\"type\": \"sign\", \"coefficient\": \"p.x_p\", \"sign\": \"non_negative\"}], \"seed\": 7",
    );
    let cfg = dir.path().join("signed.json");
    fs::write(&cfg, text).unwrap();
    pogit(&[
        "fit",
        "--config",
        path(&cfg),
        "--data",
        path(&fixture("two_covariate.csv")),
        "--out",
        path(&out),
    ]);
    assert!(read_report(&out).warnings.is_empty());
}

#[test]
fn missing_count_column_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("two_covariate.json"))
        .unwrap()
        .replace("\"count\": \"y\"", "\"count\": \"cases\"");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("fit.json");
    let run = pogit(&[
        "fit",
        "--config",
        path(&cfg),
        "--data",
        path(&fixture("two_covariate.csv")),
        "--out",
        path(&out),
    ]);
    assert_eq!(run.status.code(), Some(1));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("'cases'"), "{err}");
    assert!(!out.exists());
}

#[test]
fn malformed_value_reports_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "x_lambda,x_p,y,y_star\n0.1,0.2,1,1\n0.3,oops,0,2\n").unwrap();
    let run = pogit(&[
        "fit",
        "--config",
        path(&fixture("two_covariate.json")),
        "--data",
        path(&data),
        "--out",
        path(&dir.path().join("o.json")),
    ]);
    assert_eq!(run.status.code(), Some(1));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("'x_p' row 1"), "{err}");
}

#[test]
fn non_convergence_exits_2_with_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("two_covariate.json"))
        .unwrap()
        .replace("\"tol\": 1e-10", "\"tol\": 1e-10, \"max_iter\": 1");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("fit.json");
    let run = pogit(&[
        "fit",
        "--config",
        path(&cfg),
        "--data",
        path(&fixture("two_covariate.csv")),
        "--out",
        path(&out),
    ]);
    assert_eq!(run.status.code(), Some(2));
    let report = read_report(&out);
    assert!(!report.converged);
    assert_eq!(report.n_iterations, 1);
}

#[test]
fn compare_orders_the_three_fits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.json");
    let run = pogit(&[
        "compare",
        "--config",
        path(&fixture("two_covariate.json")),
        "--data",
        path(&fixture("two_covariate.csv")),
        "--out",
        path(&out),
    ]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let cmp: CompareOutput = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let aic = |m: &str| cmp.report.model(m).unwrap().aic;
    assert!(aic("oracle") <= aic("pogit") && aic("pogit") <= aic("naive"));
    let csv = fs::read_to_string(out.with_extension("csv")).unwrap();
    assert!(csv.starts_with("# config_sha256: "));
    assert!(csv.contains("\nmodel,k,loglik,aic,converged\n"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn compare_with_exact_reporting_ties_oracle_and_naive() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.json");
    let run = pogit(&[
        "compare",
        "--config",
        path(&fixture("two_covariate.json")),
        "--data",
        path(&fixture("exact_reporting.csv")),
        "--out",
        path(&out),
    ]);
    assert_eq!(run.status.code(), Some(0));
    let cmp: CompareOutput = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(
        cmp.report.model("oracle").unwrap().aic,
        cmp.report.model("naive").unwrap().aic
    );
}

#[test]
fn compare_without_true_counts_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.json");
    // schema without the true-count column
    let run = pogit(&[
        "compare",
        "--config",
        path(&fixture("overlap.json")),
        "--data",
        path(&fixture("two_covariate.csv")),
        "--out",
        path(&out),
    ]);
    assert_eq!(run.status.code(), Some(1));
    // schema names it but the file lacks it
    let data = dir.path().join("no_truth.csv");
    fs::write(&data, "x_lambda,x_p,y\n0.1,0.2,1\n").unwrap();
    let run = pogit(&[
        "compare",
        "--config",
        path(&fixture("two_covariate.json")),
        "--data",
        path(&data),
        "--out",
        path(&out),
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("'y_star'"));
}

#[test]
fn crlb_prints_the_bound() {
    let run = pogit(&["crlb", "--theta-lambda", "1", "--theta-p", "1", "--n", "50"]);
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8(run.stdout).unwrap();
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!((value("var_theta_lambda") - 0.012131).abs() < 1e-6);
    assert!((value("var_theta_p") - 0.024261).abs() < 1e-6);

    let run = pogit(&["crlb", "--theta-lambda", "1", "--theta-p", "0"]);
    assert!(String::from_utf8(run.stdout)
        .unwrap()
        .contains("var_theta_p 0.000000e0"));
    let run = pogit(&[
        "crlb",
        "--theta-lambda",
        "1",
        "--theta-p",
        "1",
        "--sigma-p",
        "-1",
    ]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn tiny_bound_study_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bound.json");
    fs::write(
        &cfg,
        r#"{"sweeps": [{"grid": [-1.0, 0.0, 1.0], "replicates": 10}]}"#,
    )
    .unwrap();
    let start = Instant::now();
    let run = pogit(&[
        "simulate-bound",
        "--config",
        path(&cfg),
        "--out-dir",
        path(dir.path()),
    ]);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let csv = fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), SWEEP_HEADER.join(","));
    assert_eq!(lines.count(), 3);
}

#[test]
fn tiny_synthetic_study_writes_twelve_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("syn.json");
    fs::write(&cfg, r#"{"n": 300, "realizations": 2, "grid_points": 11}"#).unwrap();
    let run = pogit(&[
        "simulate-synthetic",
        "--config",
        path(&cfg),
        "--out-dir",
        path(dir.path()),
    ]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let mut n = 0;
    for v in Variant::ALL {
        for q in [Quantity::P, Quantity::Lambda, Quantity::Mu] {
            let csv = fs::read_to_string(dir.path().join(curve_file_name(v, q))).unwrap();
            assert!(csv.contains("\nx,true_value,fit_mean,fit_lo,fit_hi\n"));
            assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 12);
            n += 1;
        }
    }
    assert_eq!(n, 12);
}

#[test]
fn convex_and_concave_overlap_fits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let run = pogit(&[
        "fit",
        "--config",
        path(&fixture("shape_constraints.json")),
        "--data",
        path(&fixture("age_sex.csv")),
        "--out",
        path(&out),
    ]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let report = read_report(&out);
    assert!(report.converged);
    assert!(report.covariance_error.is_none());
    let est: Vec<f64> = report
        .coefficients
        .iter()
        .filter(|c| c.name.starts_with("lambda.age_bs"))
        .map(|c| c.estimate)
        .collect();
    // convex on [0, 100] and concave on [60, 100] leave a straight line on [60, 100]
    let spec = SplineSpec::new(3, vec![20.0, 40.0, 60.0], (0.0, 100.0)).unwrap();
    let second = second_derivative_map(&spec, &uniform_grid(0.0, 100.0, 101)).unwrap()
        * DVector::from_vec(est);
    for (k, v) in second.iter().enumerate() {
        if k >= 60 {
            assert!(v.abs() < 1e-7, "f''({k}) = {v}");
        } else {
            assert!(*v > -1e-7, "f''({k}) = {v}");
        }
    }
}

#[test]
fn shape_constraints_with_redundant_intercept_fit() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("shape_constraints.json"))
        .unwrap()
        .replace(
            "\"lambda\": {\"terms\": [",
            "\"lambda\": {\"terms\": [{\"type\": \"intercept\"}, ",
        );
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("fit.json");
    let run = pogit(&[
        "fit",
        "--config",
        path(&cfg),
        "--data",
        path(&fixture("age_sex.csv")),
        "--out",
        path(&out),
    ]);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let report = read_report(&out);
    assert!(report.converged);
    assert_eq!(report.coefficients[0].name, "lambda.intercept");
    let err = report
        .covariance_error
        .expect("intercept duplicates the spline constant");
    assert!(err.contains("lambda.intercept"), "{err}");
}
