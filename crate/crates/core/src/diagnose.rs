//! Model comparison and identifiability diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::Dataset;
use crate::error::{PogitError, Result};
use crate::estimate::{fit, FitOptions, FitResult};
use crate::model::{PogitSpec, Problem};

pub fn aic(k: usize, loglik: f64) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Likelihood-ratio test of a reduced model nested in a full one.
pub fn lrt(loglik_full: f64, loglik_reduced: f64, df: usize) -> Result<LrtResult> {
    if df == 0 {
        return Err(PogitError::Config(
            "likelihood-ratio test needs df >= 1".into(),
        ));
    }
    let statistic = 2.0 * (loglik_full - loglik_reduced);
    if statistic < 0.0 || statistic.is_nan() {
        return Err(PogitError::Ordering(format!(
            "full model log-likelihood {loglik_full} is below the reduced model's {loglik_reduced}"
        )));
    }
    let chi = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    Ok(LrtResult {
        statistic,
        p_value: chi.sf(statistic),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub k: usize,
    /// Poisson log-likelihood of the true counts under the fitted rate.
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub full: String,
    pub reduced: String,
    pub df: usize,
    pub statistic: f64,
    /// Absent when the "full" model fits worse, i.e. the pair is not ordered as nested.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub models: Vec<ModelSummary>,
    pub tests: Vec<PairwiseTest>,
}

impl ComparisonReport {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }

    pub const CSV_HEADER: [&'static str; 5] = ["model", "k", "loglik", "aic", "converged"];

    pub fn csv_rows(&self) -> Vec<[String; 5]> {
        self.models
            .iter()
            .map(|m| {
                [
                    m.name.clone(),
                    m.k.to_string(),
                    format!("{:.16e}", m.loglik),
                    format!("{:.16e}", m.aic),
                    m.converged.to_string(),
                ]
            })
            .collect()
    }
}

/// Oracle (Poisson on true counts), Pogit and naive (Poisson on reported counts)
/// fits, each scored by the Poisson likelihood of the true counts under its rate.
pub fn oracle_protocol(
    spec: &PogitSpec,
    data: &Dataset,
    options: &FitOptions,
) -> Result<ComparisonReport> {
    let truth = data
        .true_counts
        .as_ref()
        .ok_or_else(|| {
            PogitError::Protocol(
                "the comparison needs true counts alongside reported counts".into(),
            )
        })?
        .clone();
    let rate_only = PogitSpec::poisson(spec.lambda_design.clone());
    let oracle_data = data.with_counts(truth.clone());

    let score = |name: &str, spec: &PogitSpec, fitted: &FitResult| -> Result<ModelSummary> {
        let problem = Problem::from_counts(spec, data, &data.counts)?;
        let loglik = problem.rate_log_likelihood(&fitted.theta_hat.values, &truth)?;
        let k = spec.n_coefficients();
        Ok(ModelSummary {
            name: name.into(),
            k,
            loglik,
            aic: aic(k, loglik),
            converged: fitted.converged,
        })
    };

    let oracle = score(
        "oracle",
        &rate_only,
        &fit(&rate_only, &oracle_data, options)?,
    )?;
    let pogit = score("pogit", spec, &fit(spec, data, options)?)?;
    let naive = score("naive", &rate_only, &fit(&rate_only, data, options)?)?;

    let pair = |a: &ModelSummary, b: &ModelSummary| {
        let df = a.k.abs_diff(b.k).max(1);
        let statistic = 2.0 * (a.loglik - b.loglik);
        PairwiseTest {
            full: a.name.clone(),
            reduced: b.name.clone(),
            df,
            statistic,
            p_value: lrt(a.loglik, b.loglik, df).ok().map(|r| r.p_value),
        }
    };
    let tests = vec![
        pair(&oracle, &pogit),
        pair(&pogit, &naive),
        pair(&oracle, &naive),
    ];
    Ok(ComparisonReport {
        models: vec![oracle, pogit, naive],
        tests,
    })
}

/// Relative singular-value threshold of the span test.
pub const SPAN_TOL: f64 = 1e-10;

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > SPAN_TOL * top).count()
}

/// Warn when the reporting block adds no direction beyond the rate design and
/// nothing else pins the p coefficients down.
pub fn identifiability_check(spec: &PogitSpec, data: &Dataset) -> Result<Vec<String>> {
    let kl = spec.n_lambda();
    let k = spec.n_coefficients();
    if spec.n_p() == 0 {
        return Ok(Vec::new());
    }
    let xl = spec.lambda_design.build(data)?;
    let xp = spec.p_design.build(data)?;
    let mut joint = DMatrix::zeros(data.len(), k);
    joint.columns_mut(0, kl).copy_from(&xl);
    joint.columns_mut(kl, spec.n_p()).copy_from(&xp);
    let spanned = numerical_rank(&joint) == numerical_rank(&xl);
    let pinned = spec.constraints.touches(kl..k) || spec.priors.iter().any(|p| p.touches(kl..k));
    if spanned && !pinned {
        Ok(vec![format!(
            "unidentifiable: every p-design column ({}) lies in the span of the rate design; \
             on shared columns (theta_lambda + theta_p, -theta_p) gives the same mean, so lambda \
             and p are not separately determined. Add a sign constraint or prior on the p block.",
            spec.p_design.column_names().join(", ")
        )])
    } else {
        Ok(Vec::new())
    }
}
