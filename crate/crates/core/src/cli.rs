//! The `pogit` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{synthetic_from_json, BoundStudyConfig, ModelConfig};
use crate::diagnose::{identifiability_check, oracle_protocol, ComparisonReport};
use crate::error::{PogitError, Result};
use crate::estimate::fit;
use crate::io::{fmt_f64, read_dataset, write_table_file, Meta};
use crate::simulate::{run_sweep, run_synthetic, Quantity, SweepRow};
use crate::theory::{crlb, BoundMatrix, TwoCovariateSetting};
use crate::uq::{coefficient_intervals, intervals, sandwich, RowIntervals};

#[derive(Debug, Parser)]
#[command(
    name = "pogit",
    version,
    about = "Pogit models for under-reported counts"
)]
pub struct Cli {
    /// Seed overriding the one in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model config to a CSV and write estimates, covariance and intervals as JSON.
    Fit(FitArgs),
    /// Bias and spread of the estimator against the Cramér-Rao bound over parameter sweeps.
    SimulateBound(StudyArgs),
    /// Nonlinear synthetic experiment with four model variants.
    SimulateSynthetic(StudyArgs),
    /// Print the Cramér-Rao bound for the two-covariate setting.
    Crlb(CrlbArgs),
    /// Oracle, Pogit and naive fits scored on the true counts.
    Compare(FitArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Study config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrlbArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub theta_lambda: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_p: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu_lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_p: f64,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Also write the bound as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    InputError = 1,
    NonConvergence = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub names: Vec<String>,
    pub sandwich: Vec<Vec<f64>>,
    pub model_based: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub meta: Meta,
    pub converged: bool,
    pub n_iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub nll: f64,
    pub active_constraints: Vec<String>,
    pub coefficients: Vec<CoefficientReport>,
    pub level: f64,
    pub covariance: Option<CovarianceReport>,
    /// Why the covariance is missing, e.g. a singular Hessian.
    pub covariance_error: Option<String>,
    /// Per input row; absent without a covariance.
    pub intervals: Option<Vec<RowIntervals>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutput {
    pub meta: Meta,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbOutput {
    pub setting: TwoCovariateSetting,
    pub bound: BoundMatrix,
    pub sd: [f64; 2],
}

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SYNTHETIC_SUMMARY_FILE: &str = "summary.csv";
pub const SWEEP_HEADER: [&str; 10] = [
    "swept_param",
    "value",
    "mean_theta_lambda",
    "sd_theta_lambda",
    "mean_theta_p",
    "sd_theta_p",
    "crlb_sd_lambda",
    "crlb_sd_p",
    "n_converged",
    "n_failed",
];
pub const CURVE_HEADER: [&str; 5] = ["x", "true_value", "fit_mean", "fit_lo", "fit_hi"];

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PogitError::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PogitError::io(path.display().to_string(), e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| PogitError::io(path.display().to_string(), e))
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn status(converged: bool) -> ExitStatus {
    if converged {
        ExitStatus::Success
    } else {
        ExitStatus::NonConvergence
    }
}

pub fn cmd_fit(args: &FitArgs, seed: Option<u64>) -> Result<ExitStatus> {
    let text = read_text(&args.config)?;
    let config = ModelConfig::from_json(&text)?;
    let data = read_dataset(&args.data, &config.data)?;
    let spec = config.build_spec(&data)?;
    let meta = Meta::new(text.as_bytes(), seed.unwrap_or(config.seed));
    let warnings = identifiability_check(&spec, &data)?;
    let fitted = fit(&spec, &data, &config.fit)?;

    let (covariance, covariance_error, row_intervals, coef_intervals) =
        match sandwich(&spec, &fitted.theta_hat, &data) {
            Ok(cov) => {
                let rows = intervals(&spec, &fitted.theta_hat, &cov.v, &data, config.level)?;
                let coefs = coefficient_intervals(&fitted.theta_hat.values, &cov.v, config.level)?;
                let report = CovarianceReport {
                    names: fitted.names.clone(),
                    sandwich: rows_of(&cov.v),
                    model_based: rows_of(cov.model_based()),
                };
                (
                    Some(report),
                    None,
                    Some(rows),
                    Some((cov.standard_errors(), coefs)),
                )
            }
            Err(e @ PogitError::RankDeficient { .. }) => (None, Some(e.to_string()), None, None),
            Err(e) => return Err(e),
        };

    let coefficients = fitted
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| CoefficientReport {
            name: name.clone(),
            estimate: fitted.theta_hat.values[j],
            std_error: coef_intervals.as_ref().map(|(se, _)| se[j]),
            lo: coef_intervals.as_ref().map(|(_, iv)| iv[j].lo),
            hi: coef_intervals.as_ref().map(|(_, iv)| iv[j].hi),
        })
        .collect();

    let report = FitReport {
        meta,
        converged: fitted.converged,
        n_iterations: fitted.n_iterations,
        kkt_residual: fitted.kkt_residual,
        objective: fitted.objective,
        nll: fitted.nll,
        active_constraints: fitted.active_constraints.clone(),
        coefficients,
        level: config.level,
        covariance,
        covariance_error,
        intervals: row_intervals,
        warnings,
    };
    write_json(&args.out, &report)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !fitted.converged {
        eprintln!(
            "fit did not converge after {} iterations (KKT residual {:e})",
            fitted.n_iterations, fitted.kkt_residual
        );
    }
    Ok(status(fitted.converged))
}

fn sweep_csv_row(r: &SweepRow) -> Vec<String> {
    vec![
        r.swept_param.clone(),
        fmt_f64(r.value),
        fmt_f64(r.mean_theta_lambda),
        fmt_f64(r.sd_theta_lambda),
        fmt_f64(r.mean_theta_p),
        fmt_f64(r.sd_theta_p),
        fmt_f64(r.crlb_sd_lambda),
        fmt_f64(r.crlb_sd_p),
        r.n_converged.to_string(),
        r.n_failed.to_string(),
    ]
}

pub fn cmd_simulate_bound(args: &StudyArgs, seed: Option<u64>) -> Result<ExitStatus> {
    let text = match &args.config {
        Some(path) => read_text(path)?,
        None => String::new(),
    };
    let mut config = if text.is_empty() {
        BoundStudyConfig::default()
    } else {
        BoundStudyConfig::from_json(&text)?
    };
    if let Some(s) = seed {
        config = config.with_seed(s);
    }
    for s in &config.sweeps {
        s.validate()?;
    }
    let meta = Meta::new(text.as_bytes(), config.sweeps.first().map_or(0, |s| s.seed));
    let mut rows = Vec::new();
    for sweep in &config.sweeps {
        rows.extend(run_sweep(sweep)?);
    }
    create_dir(&args.out_dir)?;
    write_table_file(
        &args.out_dir.join(SWEEP_FILE),
        &meta,
        &SWEEP_HEADER,
        rows.iter().map(sweep_csv_row),
    )?;
    Ok(ExitStatus::Success)
}

/// File name of one synthetic curve, e.g. `bounded_link_mu.csv`.
pub fn curve_file_name(variant: crate::simulate::Variant, q: Quantity) -> String {
    format!("{}_{}.csv", variant.name(), q.name())
}

pub fn cmd_simulate_synthetic(args: &StudyArgs, seed: Option<u64>) -> Result<ExitStatus> {
    let text = match &args.config {
        Some(path) => read_text(path)?,
        None => String::new(),
    };
    let mut config = if text.is_empty() {
        Default::default()
    } else {
        synthetic_from_json(&text)?
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let meta = Meta::new(text.as_bytes(), config.seed);
    let results = run_synthetic(&config)?;
    create_dir(&args.out_dir)?;
    for r in &results {
        for q in [Quantity::P, Quantity::Lambda, Quantity::Mu] {
            let rows = r.curve(q).iter().map(|c| {
                vec![
                    fmt_f64(c.x),
                    fmt_f64(c.true_value),
                    fmt_f64(c.fit_mean),
                    fmt_f64(c.fit_lo),
                    fmt_f64(c.fit_hi),
                ]
            });
            write_table_file(
                &args.out_dir.join(curve_file_name(r.variant, q)),
                &meta,
                &CURVE_HEADER,
                rows,
            )?;
        }
    }
    let summary = results.iter().map(|r| {
        vec![
            r.variant.name().to_string(),
            fmt_f64(r.p_ise),
            fmt_f64(r.lambda_ise),
            r.n_converged.to_string(),
            r.n_failed.to_string(),
        ]
    });
    write_table_file(
        &args.out_dir.join(SYNTHETIC_SUMMARY_FILE),
        &meta,
        &["variant", "p_ise", "lambda_ise", "n_converged", "n_failed"],
        summary,
    )?;
    Ok(ExitStatus::Success)
}

pub fn cmd_crlb(args: &CrlbArgs) -> Result<ExitStatus> {
    let setting = TwoCovariateSetting {
        theta_lambda: args.theta_lambda,
        theta_p: args.theta_p,
        mu_lambda: args.mu_lambda,
        sigma_lambda: args.sigma_lambda,
        sigma_p: args.sigma_p,
        n: args.n,
    };
    setting.validate()?;
    let bound = crlb(&setting);
    let [vl, vp] = bound.diagonal();
    let sd = bound.sd();
    println!("var_theta_lambda {vl:.6e}");
    println!("var_theta_p {vp:.6e}");
    println!("sd_theta_lambda {:.6e}", sd[0]);
    println!("sd_theta_p {:.6e}", sd[1]);
    if let Some(out) = &args.out {
        write_json(out, &CrlbOutput { setting, bound, sd })?;
    }
    Ok(ExitStatus::Success)
}

pub fn cmd_compare(args: &FitArgs, seed: Option<u64>) -> Result<ExitStatus> {
    let text = read_text(&args.config)?;
    let config = ModelConfig::from_json(&text)?;
    let data = read_dataset(&args.data, &config.data)?;
    let spec = config.build_spec(&data)?;
    let meta = Meta::new(text.as_bytes(), seed.unwrap_or(config.seed));
    let report = oracle_protocol(&spec, &data, &config.fit)?;
    let converged = report.models.iter().all(|m| m.converged);
    write_json(
        &args.out,
        &CompareOutput {
            meta: meta.clone(),
            report: report.clone(),
        },
    )?;
    write_table_file(
        &args.out.with_extension("csv"),
        &meta,
        &ComparisonReport::CSV_HEADER,
        report.csv_rows().into_iter().map(Vec::from),
    )?;
    Ok(status(converged))
}

pub fn execute(cli: &Cli) -> Result<ExitStatus> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| PogitError::Config(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => cmd_fit(a, cli.seed),
        Command::SimulateBound(a) => cmd_simulate_bound(a, cli.seed),
        Command::SimulateSynthetic(a) => cmd_simulate_synthetic(a, cli.seed),
        Command::Crlb(a) => cmd_crlb(a),
        Command::Compare(a) => cmd_compare(a, cli.seed),
    })
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::InputError.code()
            } else {
                ExitStatus::Success.code()
            };
        }
    };
    match execute(&cli) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::InputError.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from([
            "pogit",
            "crlb",
            "--theta-lambda",
            "1",
            "--theta-p",
            "-2",
            "--threads",
            "2",
            "--seed",
            "5",
        ])
        .unwrap();
        assert_eq!(cli.threads, 2);
        assert_eq!(cli.seed, Some(5));
        match cli.command {
            Command::Crlb(a) => {
                assert_eq!(a.theta_p, -2.0);
                assert_eq!(a.n, 50);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn usage_errors_are_input_errors() {
        assert_eq!(run(["pogit", "fit", "--config", "c.json"]), 1);
        assert_eq!(run(["pogit", "frobnicate"]), 1);
        assert_eq!(run(["pogit", "--help"]), 0);
    }

    #[test]
    fn missing_files_are_input_errors() {
        assert_eq!(
            run([
                "pogit",
                "fit",
                "--config",
                "/nonexistent/c.json",
                "--data",
                "d.csv",
                "--out",
                "o.json"
            ]),
            1
        );
    }
}
