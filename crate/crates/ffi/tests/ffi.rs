use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use pogit_ffi::*;

const CONFIG: &str = r#"{
    "data": {"count": "y", "true_count": "y_star", "covariates": ["x_lambda", "x_p"]},
    "lambda": {"terms": [{"type": "linear", "column": "x_lambda"}]},
    "p": {"terms": [{"type": "linear", "column": "x_p"}]},
    "fit": {"tol": 1e-10}
}"#;

fn fixture() -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/two_covariate.csv");
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = pogit_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn crlb_reference_case() {
    let mut out = [0.0; 4];
    let status = unsafe { pogit_crlb(1.0, 1.0, 0.0, 1.0, 1.0, 50, out.as_mut_ptr()) };
    assert_eq!(status, PogitStatus::Ok);
    assert!((out[0] - 0.012131).abs() < 1e-6);
    assert!((out[3] - 0.024261).abs() < 1e-6);
    assert_eq!((out[1], out[2]), (0.0, 0.0));

    let status = unsafe { pogit_crlb(1.0, 1.0, 0.0, -1.0, 1.0, 50, out.as_mut_ptr()) };
    assert_eq!(status, PogitStatus::InvalidArgument);
    assert!(last_error().contains("setting"));
    let status = unsafe { pogit_crlb(1.0, 1.0, 0.0, 1.0, 1.0, 50, ptr::null_mut()) };
    assert_eq!(status, PogitStatus::NullPointer);
}

#[test]
fn scalar_diagnostics() {
    assert_eq!(pogit_aic(3, -10.0), 26.0);
    let (mut stat, mut p) = (0.0, 0.0);
    assert_eq!(
        unsafe { pogit_lrt(-1.0, -3.0, 1, &mut stat, &mut p) },
        PogitStatus::Ok
    );
    assert_eq!(stat, 4.0);
    assert!(p > 0.04 && p < 0.05);
    assert_eq!(
        unsafe { pogit_lrt(-3.0, -1.0, 1, &mut stat, &mut p) },
        PogitStatus::Ordering
    );
    let (mut c, mut u) = (0.0, 0.0);
    assert_eq!(unsafe { pogit_constant_c(&mut c, &mut u) }, PogitStatus::Ok);
    assert!(c > 0.0 && c <= 0.5);
    let v = unsafe { CStr::from_ptr(pogit_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn fit_from_csv_matches_rust_api() {
    let config = CString::new(CONFIG).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { pogit_dataset_read_csv(fixture().as_ptr(), config.as_ptr(), &mut ds) },
        PogitStatus::Ok
    );
    assert_eq!(unsafe { pogit_dataset_len(ds) }, 1000);

    let mut fit = ptr::null_mut();
    assert_eq!(
        unsafe { pogit_fit(config.as_ptr(), ds, &mut fit) },
        PogitStatus::Ok
    );
    assert!(unsafe { pogit_fit_converged(fit) });
    let k = unsafe { pogit_fit_n_coefficients(fit) };
    assert_eq!(k, 2);
    let name = unsafe { CStr::from_ptr(pogit_fit_coefficient_name(fit, 1)) };
    assert_eq!(name.to_str().unwrap(), "p.x_p");
    assert!(unsafe { pogit_fit_coefficient_name(fit, 2) }.is_null());

    let mut theta = [0.0; 2];
    assert_eq!(
        unsafe { pogit_fit_coefficients(fit, theta.as_mut_ptr(), 2) },
        PogitStatus::Ok
    );
    let mut cov = [0.0; 4];
    assert_eq!(
        unsafe { pogit_fit_covariance(fit, cov.as_mut_ptr(), 4) },
        PogitStatus::Ok
    );
    assert_eq!(cov[1], cov[2]);
    assert_eq!(
        unsafe { pogit_fit_coefficients(fit, theta.as_mut_ptr(), 3) },
        PogitStatus::InvalidArgument
    );

    let cfg = pogit::config::ModelConfig::from_json(CONFIG).unwrap();
    let data = pogit::io::read_dataset(Path::new(fixture().to_str().unwrap()), &cfg.data).unwrap();
    let direct = pogit::fit(&cfg.build_spec(&data).unwrap(), &data, &cfg.fit).unwrap();
    assert_eq!(theta.to_vec(), direct.theta_hat.values);
    assert_eq!(unsafe { pogit_fit_objective(fit) }, direct.objective);

    unsafe {
        pogit_fit_free(fit);
        pogit_dataset_free(ds);
    }
}

#[test]
fn dataset_built_in_memory() {
    let counts = [0u64, 2, 1, 4, 3, 5];
    let x = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
    let mut ds = ptr::null_mut();
    unsafe {
        assert_eq!(
            pogit_dataset_new(counts.as_ptr(), 6, &mut ds),
            PogitStatus::Ok
        );
        let name = CString::new("x").unwrap();
        assert_eq!(
            pogit_dataset_add_covariate(ds, name.as_ptr(), x.as_ptr(), 6),
            PogitStatus::Ok
        );
        assert_eq!(
            pogit_dataset_add_covariate(ds, name.as_ptr(), x.as_ptr(), 5),
            PogitStatus::InvalidData
        );
        let bad = [1.0, 1.0, 1.0, -1.0, 1.0, 1.0];
        assert_eq!(
            pogit_dataset_set_exposure(ds, bad.as_ptr(), 6),
            PogitStatus::InvalidData
        );
        let too_few = [0u64; 6];
        assert_eq!(
            pogit_dataset_set_true_counts(ds, too_few.as_ptr(), 6),
            PogitStatus::InvalidData
        );
        assert!(last_error().contains("exceeds"));

        let config = CString::new(
            r#"{"data": {"count": "y"}, "lambda": {"terms": [{"type": "intercept"}, {"type": "linear", "column": "x"}]}}"#,
        )
        .unwrap();
        let mut fit = ptr::null_mut();
        assert_eq!(pogit_fit(config.as_ptr(), ds, &mut fit), PogitStatus::Ok);
        assert_eq!(pogit_fit_n_coefficients(fit), 2);
        pogit_fit_free(fit);

        let broken = CString::new(
            r#"{"data": {"count": "y"}, "lambda": {"terms": [{"type": "linear", "column": "z"}]}}"#,
        )
        .unwrap();
        assert_eq!(
            pogit_fit(broken.as_ptr(), ds, &mut fit),
            PogitStatus::Schema
        );
        assert!(last_error().contains("'z'"));
        assert_eq!(
            pogit_fit(ptr::null(), ds, &mut fit),
            PogitStatus::NullPointer
        );
        pogit_dataset_free(ds);
        pogit_dataset_free(ptr::null_mut());
    }
}

#[test]
fn non_convergence_still_returns_a_handle() {
    let config =
        CString::new(CONFIG.replace("\"tol\": 1e-10", "\"tol\": 1e-10, \"max_iter\": 1")).unwrap();
    let mut ds = ptr::null_mut();
    let mut fit = ptr::null_mut();
    unsafe {
        pogit_dataset_read_csv(fixture().as_ptr(), config.as_ptr(), &mut ds);
        assert_eq!(
            pogit_fit(config.as_ptr(), ds, &mut fit),
            PogitStatus::NotConverged
        );
        assert!(!fit.is_null());
        assert!(!pogit_fit_converged(fit));
        pogit_fit_free(fit);
        pogit_dataset_free(ds);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = include.join("pogit.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "pogit_fit(",
        "pogit_crlb(",
        "pogit_last_error_message(",
        "POGIT_STATUS_RANK_DEFICIENT",
        "typedef struct PogitFit PogitFit;",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
        else {
            eprintln!("{compiler} not available; skipping");
            continue;
        };
        assert!(
            out.status.success(),
            "{compiler}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
