//! The Pogit likelihood: `Y ~ Poisson(lambda * p)` with `lambda = exp(x_l' theta_l)`
//! (times exposure) and `p` a logistic-family inverse link of `x_p' theta_p`.
//!
//! An empty p design means `p == 1` structurally, which turns every routine here
//! into plain Poisson regression.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dataset::Dataset;
use crate::design::DesignBuilder;
use crate::error::{PogitError, Result};
use crate::estimate::{ConstraintSet, GaussianPrior};
use crate::link::LinkFunction;

/// Full model description: designs, links, constraints and priors.
#[derive(Debug, Clone, PartialEq)]
pub struct PogitSpec {
    pub lambda_design: DesignBuilder,
    pub p_design: DesignBuilder,
    pub lambda_link: LinkFunction,
    pub p_link: LinkFunction,
    pub constraints: ConstraintSet,
    pub priors: Vec<GaussianPrior>,
}

impl PogitSpec {
    pub fn new(lambda_design: DesignBuilder, p_design: DesignBuilder) -> Self {
        PogitSpec {
            lambda_design,
            p_design,
            lambda_link: LinkFunction::Log,
            p_link: LinkFunction::Logit,
            constraints: ConstraintSet::default(),
            priors: Vec::new(),
        }
    }

    /// Plain Poisson regression on `design` (p fixed at one).
    pub fn poisson(design: DesignBuilder) -> Self {
        Self::new(design, DesignBuilder::empty())
    }

    pub fn with_p_link(mut self, link: LinkFunction) -> Self {
        self.p_link = link;
        self
    }

    pub fn with_constraints(mut self, constraints: ConstraintSet) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn with_prior(mut self, prior: GaussianPrior) -> Self {
        self.priors.push(prior);
        self
    }

    pub fn n_lambda(&self) -> usize {
        self.lambda_design.n_columns()
    }

    pub fn n_p(&self) -> usize {
        self.p_design.n_columns()
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_lambda() + self.n_p()
    }

    /// Coefficient names prefixed with their block, e.g. `lambda.age_bs2`, `p.sex`.
    pub fn coefficient_names(&self) -> Vec<String> {
        let lambda = self
            .lambda_design
            .column_names()
            .into_iter()
            .map(|c| format!("lambda.{c}"));
        let p = self
            .p_design
            .column_names()
            .into_iter()
            .map(|c| format!("p.{c}"));
        lambda.chain(p).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_link != LinkFunction::Log {
            return Err(PogitError::InvalidLink(
                "the rate block must use the log link".into(),
            ));
        }
        if self.p_link == LinkFunction::Log {
            return Err(PogitError::InvalidLink(
                "the reporting block needs a logit or bounded-logit link".into(),
            ));
        }
        self.p_link.validate()?;
        self.lambda_design.validate()?;
        self.p_design.validate()?;
        let k = self.n_coefficients();
        self.constraints.validate(k)?;
        for prior in &self.priors {
            prior.validate(k)?;
        }
        Ok(())
    }
}

/// Coefficients `[theta_lambda ; theta_p]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub n_lambda: usize,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, n_lambda: usize) -> Self {
        assert!(
            n_lambda <= values.len(),
            "block boundary beyond vector length"
        );
        ParameterVector { values, n_lambda }
    }

    pub fn from_blocks(lambda: &[f64], p: &[f64]) -> Self {
        let mut values = lambda.to_vec();
        values.extend_from_slice(p);
        ParameterVector {
            values,
            n_lambda: lambda.len(),
        }
    }

    pub fn zeros(spec: &PogitSpec) -> Self {
        ParameterVector::new(vec![0.0; spec.n_coefficients()], spec.n_lambda())
    }

    pub fn lambda(&self) -> &[f64] {
        &self.values[..self.n_lambda]
    }

    pub fn p(&self) -> &[f64] {
        &self.values[self.n_lambda..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub lambda: f64,
    pub p: f64,
    pub mu: f64,
}

/// Per-row quantities shared by the value, gradient and Hessian.
#[derive(Debug, Clone, Copy)]
struct RowEval {
    lambda: f64,
    p: f64,
    mu: f64,
    log_mu: f64,
    dp: f64,
    d2p: f64,
    dp_ratio: f64,
    d2p_ratio: f64,
}

/// What to compute in [`Problem::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

/// A model specification compiled against a dataset.
#[derive(Debug, Clone)]
pub struct Problem {
    x_lambda: DMatrix<f64>,
    x_p: DMatrix<f64>,
    log_exposure: Option<Vec<f64>>,
    y: Vec<f64>,
    log_y_factorial: Vec<f64>,
    p_link: Option<LinkFunction>,
}

pub(crate) fn log_factorial(y: u64) -> f64 {
    if y <= 1 {
        0.0
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

impl Problem {
    pub fn new(spec: &PogitSpec, data: &Dataset) -> Result<Self> {
        spec.validate()?;
        Self::from_counts(spec, data, &data.counts)
    }

    /// Compile with an alternative count vector (e.g. validation counts).
    pub fn from_counts(spec: &PogitSpec, data: &Dataset, counts: &[u64]) -> Result<Self> {
        data.validate()?;
        if counts.len() != data.len() {
            return Err(PogitError::InvalidData(
                "count vector length mismatch".into(),
            ));
        }
        let x_lambda = spec.lambda_design.build(data)?;
        let x_p = spec.p_design.build(data)?;
        Ok(Problem {
            x_lambda,
            x_p,
            log_exposure: data
                .exposure
                .as_ref()
                .map(|e| e.iter().map(|v| v.ln()).collect()),
            y: counts.iter().map(|&c| c as f64).collect(),
            log_y_factorial: counts.iter().map(|&c| log_factorial(c)).collect(),
            p_link: (!spec.p_design.is_empty()).then_some(spec.p_link),
        })
    }

    /// Build directly from design matrices and counts.
    pub fn from_matrices(
        x_lambda: DMatrix<f64>,
        x_p: DMatrix<f64>,
        counts: &[u64],
        p_link: LinkFunction,
    ) -> Result<Self> {
        let n = counts.len();
        if x_lambda.nrows() != n || x_p.nrows() != n {
            return Err(PogitError::Dimension(format!(
                "design rows ({}, {}) do not match {n} counts",
                x_lambda.nrows(),
                x_p.nrows()
            )));
        }
        let has_p = x_p.ncols() > 0;
        Ok(Problem {
            x_lambda,
            x_p,
            log_exposure: None,
            y: counts.iter().map(|&c| c as f64).collect(),
            log_y_factorial: counts.iter().map(|&c| log_factorial(c)).collect(),
            p_link: has_p.then_some(p_link),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_lambda(&self) -> usize {
        self.x_lambda.ncols()
    }

    pub fn n_p(&self) -> usize {
        self.x_p.ncols()
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_lambda() + self.n_p()
    }

    pub fn x_lambda(&self) -> &DMatrix<f64> {
        &self.x_lambda
    }

    pub fn x_p(&self) -> &DMatrix<f64> {
        &self.x_p
    }

    /// Link of the p block, `None` when p is fixed at one.
    pub fn p_link(&self) -> Option<LinkFunction> {
        self.p_link
    }

    /// Log-exposure of row `i` (zero without exposure).
    pub fn log_exposure(&self, i: usize) -> f64 {
        self.log_exposure.as_ref().map_or(0.0, |e| e[i])
    }

    pub fn counts(&self) -> &[f64] {
        &self.y
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_coefficients() {
            return Err(PogitError::Dimension(format!(
                "theta has {} entries, model has {} coefficients",
                theta.len(),
                self.n_coefficients()
            )));
        }
        Ok(())
    }

    /// Linear predictors `(eta_lambda, eta_p)` per row; `eta_lambda` excludes the exposure offset.
    pub fn linear_predictors(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let k = self.n_lambda();
        let tl = DVector::from_column_slice(&theta[..k]);
        let tp = DVector::from_column_slice(&theta[k..]);
        (&self.x_lambda * tl, &self.x_p * tp)
    }

    fn row_eval(&self, i: usize, eta_l: f64, eta_p: f64) -> Result<RowEval> {
        let log_lambda = match &self.log_exposure {
            Some(off) => eta_l + off[i],
            None => eta_l,
        };
        let lambda = log_lambda.exp();
        let (p, log_p, dp, d2p, dp_ratio, d2p_ratio) = match &self.p_link {
            Some(link) => {
                let e = link.eval(eta_p);
                (e.value, e.log_value, e.d1, e.d2, e.d1_ratio, e.d2_ratio)
            }
            None => (1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        };
        let mu = lambda * p;
        if !mu.is_finite() || !lambda.is_finite() {
            return Err(PogitError::NumericalOverflow {
                row: i,
                eta_lambda: eta_l,
                eta_p,
            });
        }
        Ok(RowEval {
            lambda,
            p,
            mu,
            log_mu: log_lambda + log_p,
            dp,
            d2p,
            dp_ratio,
            d2p_ratio,
        })
    }

    /// Rate, probability and mean for every row.
    pub fn predictions(&self, theta: &[f64]) -> Result<Vec<Prediction>> {
        self.check_len(theta)?;
        let (el, ep) = self.linear_predictors(theta);
        (0..self.n_rows())
            .map(|i| {
                let r = self.row_eval(i, el[i], ep[i])?;
                Ok(Prediction {
                    lambda: r.lambda,
                    p: r.p,
                    mu: r.mu,
                })
            })
            .collect()
    }

    /// Negative log-likelihood and (optionally) its derivatives.
    pub fn evaluate(&self, theta: &[f64], order: Order) -> Result<Evaluation> {
        self.check_len(theta)?;
        let n = self.n_rows();
        let (el, ep) = self.linear_predictors(theta);
        let mut value = 0.0;
        let want_grad = order >= Order::Gradient;
        let want_hess = order >= Order::Hessian;
        let mut g_l = DVector::zeros(if want_grad { n } else { 0 });
        let mut g_p = DVector::zeros(if want_grad { n } else { 0 });
        let (mut h_ll, mut h_lp, mut h_pp) = if want_hess {
            (DVector::zeros(n), DVector::zeros(n), DVector::zeros(n))
        } else {
            (DVector::zeros(0), DVector::zeros(0), DVector::zeros(0))
        };
        for i in 0..n {
            let r = self.row_eval(i, el[i], ep[i])?;
            let y = self.y[i];
            value += r.mu - y * r.log_mu + self.log_y_factorial[i];
            if want_grad {
                g_l[i] = r.mu - y;
                g_p[i] = r.lambda * r.dp - y * r.dp_ratio;
            }
            if want_hess {
                h_ll[i] = r.mu;
                h_lp[i] = r.lambda * r.dp;
                h_pp[i] = r.lambda * r.d2p - y * (r.d2p_ratio - r.dp_ratio * r.dp_ratio);
            }
        }
        if !value.is_finite() {
            return Err(PogitError::NumericalOverflow {
                row: usize::MAX,
                eta_lambda: f64::NAN,
                eta_p: f64::NAN,
            });
        }
        let gradient = want_grad.then(|| {
            let mut g = DVector::zeros(self.n_coefficients());
            let k = self.n_lambda();
            g.rows_mut(0, k).copy_from(&self.x_lambda.tr_mul(&g_l));
            if self.n_p() > 0 {
                g.rows_mut(k, self.n_p()).copy_from(&self.x_p.tr_mul(&g_p));
            }
            g
        });
        let hessian = want_hess.then(|| self.assemble_hessian(&h_ll, &h_lp, &h_pp));
        Ok(Evaluation {
            value,
            gradient,
            hessian,
        })
    }

    fn weighted_cross(a: &DMatrix<f64>, w: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut wb = b.clone();
        for mut col in wb.column_iter_mut() {
            col.component_mul_assign(w);
        }
        a.tr_mul(&wb)
    }

    fn assemble_hessian(
        &self,
        h_ll: &DVector<f64>,
        h_lp: &DVector<f64>,
        h_pp: &DVector<f64>,
    ) -> DMatrix<f64> {
        let kl = self.n_lambda();
        let kp = self.n_p();
        let mut h = DMatrix::zeros(kl + kp, kl + kp);
        h.view_mut((0, 0), (kl, kl))
            .copy_from(&Self::weighted_cross(&self.x_lambda, h_ll, &self.x_lambda));
        if kp > 0 {
            let cross = Self::weighted_cross(&self.x_lambda, h_lp, &self.x_p);
            h.view_mut((0, kl), (kl, kp)).copy_from(&cross);
            h.view_mut((kl, 0), (kp, kl)).copy_from(&cross.transpose());
            h.view_mut((kl, kl), (kp, kp))
                .copy_from(&Self::weighted_cross(&self.x_p, h_pp, &self.x_p));
        }
        // exact symmetry
        for i in 0..h.nrows() {
            for j in 0..i {
                let v = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    pub fn nll(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta, Order::Value)?.value)
    }

    /// Per-observation gradients of the negative log-likelihood, one row per observation.
    pub fn score_rows(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(theta)?;
        let (el, ep) = self.linear_predictors(theta);
        let kl = self.n_lambda();
        let mut s = DMatrix::zeros(self.n_rows(), self.n_coefficients());
        for i in 0..self.n_rows() {
            let r = self.row_eval(i, el[i], ep[i])?;
            let y = self.y[i];
            let gl = r.mu - y;
            let gp = r.lambda * r.dp - y * r.dp_ratio;
            for j in 0..kl {
                s[(i, j)] = gl * self.x_lambda[(i, j)];
            }
            for j in 0..self.n_p() {
                s[(i, kl + j)] = gp * self.x_p[(i, j)];
            }
        }
        Ok(s)
    }

    /// Poisson log-likelihood of `counts` under this problem's fitted rates `lambda`.
    pub fn rate_log_likelihood(&self, theta: &[f64], counts: &[u64]) -> Result<f64> {
        let preds = self.predictions(theta)?;
        if counts.len() != preds.len() {
            return Err(PogitError::Dimension("count vector length mismatch".into()));
        }
        let mut ll = 0.0;
        for (pred, &c) in preds.iter().zip(counts) {
            let y = c as f64;
            let term = if c == 0 { 0.0 } else { y * pred.lambda.ln() };
            ll += term - pred.lambda - log_factorial(c);
        }
        Ok(ll)
    }
}

/// Rate, probability and mean for a single covariate record.
pub fn predict(
    spec: &PogitSpec,
    theta: &ParameterVector,
    record: &BTreeMap<String, f64>,
    exposure: Option<f64>,
) -> Result<Prediction> {
    if theta.len() != spec.n_coefficients() || theta.n_lambda != spec.n_lambda() {
        return Err(PogitError::Dimension(
            "parameter vector does not match the model".into(),
        ));
    }
    let xl = spec.lambda_design.build_row(record)?;
    let xp = spec.p_design.build_row(record)?;
    let eta_l: f64 = xl.iter().zip(theta.lambda()).map(|(a, b)| a * b).sum();
    let eta_p: f64 = xp.iter().zip(theta.p()).map(|(a, b)| a * b).sum();
    let mut lambda = eta_l.exp();
    if let Some(e) = exposure {
        lambda *= e;
    }
    let p = if spec.p_design.is_empty() {
        1.0
    } else {
        spec.p_link.inverse(eta_p)
    };
    Ok(Prediction {
        lambda,
        p,
        mu: lambda * p,
    })
}

pub fn neg_log_likelihood(
    spec: &PogitSpec,
    theta: &ParameterVector,
    data: &Dataset,
) -> Result<f64> {
    Problem::new(spec, data)?.nll(&theta.values)
}

pub fn gradient(spec: &PogitSpec, theta: &ParameterVector, data: &Dataset) -> Result<DVector<f64>> {
    let eval = Problem::new(spec, data)?.evaluate(&theta.values, Order::Gradient)?;
    Ok(eval.gradient.expect("gradient requested"))
}

pub fn hessian(spec: &PogitSpec, theta: &ParameterVector, data: &Dataset) -> Result<DMatrix<f64>> {
    let eval = Problem::new(spec, data)?.evaluate(&theta.values, Order::Hessian)?;
    Ok(eval.hessian.expect("hessian requested"))
}

/// Plain Poisson regression negative log-likelihood with gradient and Hessian.
pub fn poisson_nll(design: &DesignBuilder, theta: &[f64], data: &Dataset) -> Result<Evaluation> {
    Problem::new(&PogitSpec::poisson(design.clone()), data)?.evaluate(theta, Order::Hessian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Term;

    fn intercept_only() -> DesignBuilder {
        DesignBuilder::new(vec![Term::Intercept])
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn predict_at_zero() {
        let spec = PogitSpec::new(intercept_only(), intercept_only());
        let pred = predict(
            &spec,
            &ParameterVector::zeros(&spec),
            &BTreeMap::new(),
            None,
        )
        .unwrap();
        assert_eq!((pred.lambda, pred.p, pred.mu), (1.0, 0.5, 0.5));
    }

    #[test]
    fn predict_single_covariate() {
        let x = DesignBuilder::new(vec![Term::Linear { column: "x".into() }]);
        let spec = PogitSpec::new(x.clone(), x);
        let record = BTreeMap::from([("x".to_string(), 1.0)]);
        let pred = predict(
            &spec,
            &ParameterVector::from_blocks(&[1.0], &[2.0]),
            &record,
            None,
        )
        .unwrap();
        assert_eq!(pred.lambda, 1f64.exp());
        assert!(close(pred.p, 1.0 / (1.0 + (-2f64).exp()), 1e-15));
        assert!(close(pred.mu, 2.394255, 1e-6));
        assert_eq!(pred.mu, pred.lambda * pred.p);
    }

    #[test]
    fn empty_p_design_means_full_reporting() {
        let spec = PogitSpec::poisson(intercept_only());
        let pred = predict(
            &spec,
            &ParameterVector::zeros(&spec),
            &BTreeMap::new(),
            Some(2.5),
        )
        .unwrap();
        assert_eq!(pred.mu, pred.lambda);
        assert_eq!(pred.lambda, 2.5);
    }

    #[test]
    fn reference_nll_values() {
        let poisson = PogitSpec::poisson(intercept_only());
        let data = Dataset::new(vec![0]);
        let v = neg_log_likelihood(&poisson, &ParameterVector::zeros(&poisson), &data).unwrap();
        assert_eq!(v, 1.0);

        let pogit = PogitSpec::new(intercept_only(), intercept_only());
        let data = Dataset::new(vec![1]);
        let v = neg_log_likelihood(&pogit, &ParameterVector::zeros(&pogit), &data).unwrap();
        assert!(close(v, 0.5 - 0.5f64.ln(), 1e-12));
        assert!(close(v, 1.193147, 1e-6));
    }

    #[test]
    fn nll_is_additive_over_rows() {
        let spec = PogitSpec::new(intercept_only(), intercept_only());
        let theta = ParameterVector::from_blocks(&[0.3], &[-0.4]);
        let a = neg_log_likelihood(&spec, &theta, &Dataset::new(vec![3])).unwrap();
        let b = neg_log_likelihood(&spec, &theta, &Dataset::new(vec![5])).unwrap();
        let ab = neg_log_likelihood(&spec, &theta, &Dataset::new(vec![3, 5])).unwrap();
        assert!(close(a + b, ab, 1e-12));
    }

    #[test]
    fn poisson_intercept_closed_form() {
        let data = Dataset::new(vec![2, 4]);
        let eval = poisson_nll(&intercept_only(), &[3f64.ln()], &data).unwrap();
        let expected = 6.0 - 6.0 * 3f64.ln() + 2f64.ln() + 24f64.ln();
        assert!(close(eval.value, expected, 1e-12));
        assert!(close(eval.value, 3.279527, 1e-6));
        assert!(eval.gradient.unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn poisson_matches_pogit_with_empty_p_block() {
        let data = Dataset::new(vec![2, 0, 7]).with_covariate("x", vec![0.1, -1.0, 2.0]);
        let design = DesignBuilder::new(vec![Term::Intercept, Term::Linear { column: "x".into() }]);
        let theta = [0.2, 0.5];
        let a = poisson_nll(&design, &theta, &data).unwrap().value;
        let spec = PogitSpec::poisson(design);
        let b = neg_log_likelihood(&spec, &ParameterVector::new(theta.to_vec(), 2), &data).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_zero_counts_favor_lower_rate() {
        let data = Dataset::new(vec![0, 0, 0]);
        let mut prev = f64::INFINITY;
        for t in [5.0, 0.0, -5.0, -20.0] {
            let v = poisson_nll(&intercept_only(), &[t], &data).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn overflow_names_row() {
        let data = Dataset::new(vec![1, 1]).with_covariate("x", vec![0.0, 1000.0]);
        let design = DesignBuilder::new(vec![Term::Linear { column: "x".into() }]);
        let err = poisson_nll(&design, &[1.0], &data).unwrap_err();
        assert!(matches!(err, PogitError::NumericalOverflow { row: 1, .. }));
    }

    #[test]
    fn rejects_non_log_rate_link() {
        let mut spec = PogitSpec::new(intercept_only(), intercept_only());
        spec.lambda_link = LinkFunction::Logit;
        assert!(spec.validate().is_err());
    }
}
