//! C interface to `pogit`.
//!
//! Every function returns a [`PogitStatus`] (or a plain value for infallible
//! queries). On failure a message for the calling thread is available from
//! [`pogit_last_error_message`] until the next failing call on that thread.
//! Handles are opaque; free them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pogit::config::ModelConfig;
use pogit::diagnose::{aic, lrt};
use pogit::estimate::{fit, FitResult};
use pogit::io::read_dataset;
use pogit::theory::{constant_c_bound, crlb, TwoCovariateSetting};
use pogit::uq::sandwich;
use pogit::{Dataset, PogitError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PogitStatus {
    Ok = 0,
    /// The fit handle was produced but the optimizer stopped before convergence.
    NotConverged = 1,
    NullPointer = 2,
    InvalidUtf8 = 3,
    InvalidArgument = 4,
    Schema = 5,
    InvalidData = 6,
    Infeasible = 7,
    Numerical = 8,
    RankDeficient = 9,
    Ordering = 10,
    Protocol = 11,
    Io = 12,
    Panic = 13,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PogitStatus, String);

impl From<PogitError> for Failure {
    fn from(e: PogitError) -> Self {
        let status = match &e {
            PogitError::InvalidSpline(_)
            | PogitError::OutOfDomain { .. }
            | PogitError::UnsupportedDegree { .. }
            | PogitError::InvalidLink(_)
            | PogitError::Config(_) => PogitStatus::InvalidArgument,
            PogitError::Schema(_) => PogitStatus::Schema,
            PogitError::InvalidData(_) | PogitError::Dimension(_) => PogitStatus::InvalidData,
            PogitError::NumericalOverflow { .. }
            | PogitError::NotPositiveDefinite
            | PogitError::SubproblemStalled => PogitStatus::Numerical,
            PogitError::Infeasible { .. } => PogitStatus::Infeasible,
            PogitError::RankDeficient { .. } => PogitStatus::RankDeficient,
            PogitError::Ordering(_) => PogitStatus::Ordering,
            PogitError::Protocol(_) => PogitStatus::Protocol,
            PogitError::Io { .. } | PogitError::Csv(_) | PogitError::Json(_) => PogitStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<PogitStatus, Failure>) -> PogitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PogitStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PogitStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            PogitStatus::InvalidUtf8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn pogit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pogit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

pub struct PogitDataset {
    inner: Dataset,
}

/// New dataset holding `n` reported counts and no covariates.
///
/// # Safety
/// `counts` must point to `n` values (or be null with `n == 0`); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pogit_dataset_new(
    counts: *const u64,
    n: usize,
    out: *mut *mut PogitDataset,
) -> PogitStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let counts = slice_arg(counts, n, "counts")?.to_vec();
        *out = Box::into_raw(Box::new(PogitDataset {
            inner: Dataset::new(counts),
        }));
        Ok(PogitStatus::Ok)
    })
}

/// Read a CSV laid out by the `data` section of a model config.
///
/// # Safety
/// `path` and `config_json` must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pogit_dataset_read_csv(
    path: *const c_char,
    config_json: *const c_char,
    out: *mut *mut PogitDataset,
) -> PogitStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let config = ModelConfig::from_json(str_arg(config_json, "config_json")?)?;
        let inner = read_dataset(Path::new(path), &config.data)?;
        *out = Box::into_raw(Box::new(PogitDataset { inner }));
        Ok(PogitStatus::Ok)
    })
}

fn check_len(dataset: &PogitDataset, n: usize) -> Result<(), Failure> {
    if n != dataset.inner.len() {
        return Err(Failure(
            PogitStatus::InvalidData,
            format!(
                "got {n} values for a dataset of {} rows",
                dataset.inner.len()
            ),
        ));
    }
    Ok(())
}

/// # Safety
/// `dataset` must come from this library; `name` must be nul-terminated; `values` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn pogit_dataset_add_covariate(
    dataset: *mut PogitDataset,
    name: *const c_char,
    values: *const f64,
    n: usize,
) -> PogitStatus {
    guard(|| {
        let ds = out_arg(dataset, "dataset")?;
        let name = str_arg(name, "name")?;
        check_len(ds, n)?;
        let values = slice_arg(values, n, "values")?.to_vec();
        ds.inner.covariates.insert(name.to_string(), values);
        ds.inner.validate()?;
        Ok(PogitStatus::Ok)
    })
}

/// Per-row exposure, a multiplicative factor on the rate.
///
/// # Safety
/// `dataset` must come from this library; `values` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn pogit_dataset_set_exposure(
    dataset: *mut PogitDataset,
    values: *const f64,
    n: usize,
) -> PogitStatus {
    guard(|| {
        let ds = out_arg(dataset, "dataset")?;
        check_len(ds, n)?;
        ds.inner.exposure = Some(slice_arg(values, n, "values")?.to_vec());
        if let Err(e) = ds.inner.validate() {
            ds.inner.exposure = None;
            return Err(e.into());
        }
        Ok(PogitStatus::Ok)
    })
}

/// # Safety
/// `dataset` must come from this library; `counts` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn pogit_dataset_set_true_counts(
    dataset: *mut PogitDataset,
    counts: *const u64,
    n: usize,
) -> PogitStatus {
    guard(|| {
        let ds = out_arg(dataset, "dataset")?;
        check_len(ds, n)?;
        ds.inner.true_counts = Some(slice_arg(counts, n, "counts")?.to_vec());
        if let Err(e) = ds.inner.validate() {
            ds.inner.true_counts = None;
            return Err(e.into());
        }
        Ok(PogitStatus::Ok)
    })
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pogit_dataset_len(dataset: *const PogitDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pogit_dataset_free(dataset: *mut PogitDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

pub struct PogitFit {
    result: FitResult,
    names: Vec<CString>,
    covariance: Result<Vec<f64>, String>,
}

/// Fit the model described by `config_json` to `dataset`.
///
/// Returns `POGIT_STATUS_NOT_CONVERGED` with a valid handle when the optimizer
/// stopped early.
///
/// # Safety
/// `config_json` must be nul-terminated; `dataset` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit(
    config_json: *const c_char,
    dataset: *const PogitDataset,
    out: *mut *mut PogitFit,
) -> PogitStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let config = ModelConfig::from_json(str_arg(config_json, "config_json")?)?;
        let spec = config.build_spec(ds)?;
        let result = fit(&spec, ds, &config.fit)?;
        let covariance = match sandwich(&spec, &result.theta_hat, ds) {
            Ok(cov) => Ok(cov.v.transpose().as_slice().to_vec()),
            Err(e @ PogitError::RankDeficient { .. }) => Err(e.to_string()),
            Err(e) => return Err(e.into()),
        };
        let names = result
            .names
            .iter()
            .map(|n| CString::new(n.as_str()).expect("coefficient names have no nul"))
            .collect();
        let converged = result.converged;
        *out = Box::into_raw(Box::new(PogitFit {
            result,
            names,
            covariance,
        }));
        if converged {
            Ok(PogitStatus::Ok)
        } else {
            set_last_error("the optimizer stopped before convergence".into());
            Ok(PogitStatus::NotConverged)
        }
    })
}

/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit_n_coefficients(fit: *const PogitFit) -> usize {
    fit.as_ref().map_or(0, |f| f.names.len())
}

/// Name of coefficient `i` (e.g. `p.x`), owned by the fit handle; null when out of range.
///
/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit_coefficient_name(
    fit: *const PogitFit,
    i: usize,
) -> *const c_char {
    fit.as_ref()
        .and_then(|f| f.names.get(i))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Copy the estimates into `out`, which must hold exactly the coefficient count.
///
/// # Safety
/// `fit` must come from this library; `out` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit_coefficients(
    fit: *const PogitFit,
    out: *mut f64,
    len: usize,
) -> PogitStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let values = &f.result.theta_hat.values;
        if len != values.len() || out.is_null() {
            return Err(Failure(
                PogitStatus::InvalidArgument,
                format!("need a buffer of {} values", values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(values);
        Ok(PogitStatus::Ok)
    })
}

/// Row-major sandwich covariance; `len` must be the squared coefficient count.
///
/// # Safety
/// `fit` must come from this library; `out` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit_covariance(
    fit: *const PogitFit,
    out: *mut f64,
    len: usize,
) -> PogitStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let cov = f
            .covariance
            .as_ref()
            .map_err(|m| Failure(PogitStatus::RankDeficient, m.clone()))?;
        if len != cov.len() || out.is_null() {
            return Err(Failure(
                PogitStatus::InvalidArgument,
                format!("need a buffer of {} values", cov.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(cov);
        Ok(PogitStatus::Ok)
    })
}

/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit_converged(fit: *const PogitFit) -> bool {
    fit.as_ref().is_some_and(|f| f.result.converged)
}

/// Penalized objective at the estimate; NaN for a null handle.
///
/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit_objective(fit: *const PogitFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.result.objective)
}

/// # Safety
/// `fit` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit_kkt_residual(fit: *const PogitFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.result.kkt_residual)
}

/// # Safety
/// `fit` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pogit_fit_free(fit: *mut PogitFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Cramér-Rao bound of the two-covariate model, written row-major into `out[4]`.
///
/// # Safety
/// `out` must be writable for 4 values.
#[no_mangle]
pub unsafe extern "C" fn pogit_crlb(
    theta_lambda: f64,
    theta_p: f64,
    mu_lambda: f64,
    sigma_lambda: f64,
    sigma_p: f64,
    n: usize,
    out: *mut f64,
) -> PogitStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let setting = TwoCovariateSetting {
            theta_lambda,
            theta_p,
            mu_lambda,
            sigma_lambda,
            sigma_p,
            n,
        };
        setting.validate()?;
        let m = crlb(&setting).matrix;
        std::slice::from_raw_parts_mut(out, 4)
            .copy_from_slice(&[m[0][0], m[0][1], m[1][0], m[1][1]]);
        Ok(PogitStatus::Ok)
    })
}

/// Maximum of `u^2 e^u / (1 + e^u)^3` and where it is attained.
///
/// # Safety
/// Both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pogit_constant_c(value: *mut f64, argmax: *mut f64) -> PogitStatus {
    guard(|| {
        let (value, argmax) = (out_arg(value, "value")?, out_arg(argmax, "argmax")?);
        let c = constant_c_bound();
        *value = c.value;
        *argmax = c.argmax;
        Ok(PogitStatus::Ok)
    })
}

#[no_mangle]
pub extern "C" fn pogit_aic(k: usize, loglik: f64) -> f64 {
    aic(k, loglik)
}

/// Likelihood-ratio statistic and chi-square p-value for nested models.
///
/// # Safety
/// Both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pogit_lrt(
    loglik_full: f64,
    loglik_reduced: f64,
    df: usize,
    statistic: *mut f64,
    p_value: *mut f64,
) -> PogitStatus {
    guard(|| {
        let (statistic, p_value) = (
            out_arg(statistic, "statistic")?,
            out_arg(p_value, "p_value")?,
        );
        let r = lrt(loglik_full, loglik_reduced, df)?;
        *statistic = r.statistic;
        *p_value = r.p_value;
        Ok(PogitStatus::Ok)
    })
}
