//! Sandwich covariance of the fitted coefficients and delta-method intervals.
//!
//! `A` is the observed Hessian of the unpenalized negative log-likelihood at the
//! estimate and `B` the sum of per-row score outer products. Priors and active
//! constraints move the estimate but are not reflected in `V`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{PogitError, Result};
use crate::model::{Order, ParameterVector, PogitSpec, Problem};

/// Relative eigenvalue threshold below which `A` counts as singular.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCovariance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub v: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvectors of `a` whose eigenvalues are negligible next to the largest.
fn null_directions(a: &DMatrix<f64>, names: &[String]) -> Vec<Vec<(String, f64)>> {
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.amax();
    let mut out = Vec::new();
    for (k, &val) in eig.eigenvalues.iter().enumerate() {
        if val.abs() <= RANK_TOL * top || top == 0.0 {
            let v = eig.eigenvectors.column(k);
            out.push(names.iter().cloned().zip(v.iter().copied()).collect());
        }
    }
    out
}

impl SandwichCovariance {
    pub fn from_parts(a: DMatrix<f64>, b: DMatrix<f64>, names: &[String]) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k || b.shape() != (k, k) || names.len() != k {
            return Err(PogitError::Dimension(
                "sandwich parts must be square and agree in size".into(),
            ));
        }
        let directions = null_directions(&a, names);
        if !directions.is_empty() {
            return Err(PogitError::RankDeficient { directions });
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| PogitError::RankDeficient {
                directions: null_directions(&a, names),
            })?;
        let mut a_inv = a_inv;
        symmetrize(&mut a_inv);
        let mut v = &a_inv * &b * &a_inv;
        symmetrize(&mut v);
        Ok(SandwichCovariance { a, b, v, a_inv })
    }

    /// Model-based covariance `A^-1`.
    pub fn model_based(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.v.nrows())
            .map(|i| self.v[(i, i)].max(0.0).sqrt())
            .collect()
    }
}

pub fn sandwich_problem(
    problem: &Problem,
    theta: &[f64],
    names: &[String],
) -> Result<SandwichCovariance> {
    let a = problem
        .evaluate(theta, Order::Hessian)?
        .hessian
        .expect("hessian requested");
    let s = problem.score_rows(theta)?;
    let b = s.tr_mul(&s);
    SandwichCovariance::from_parts(a, b, names)
}

pub fn sandwich(
    spec: &PogitSpec,
    theta_hat: &ParameterVector,
    data: &Dataset,
) -> Result<SandwichCovariance> {
    let problem = Problem::new(spec, data)?;
    sandwich_problem(&problem, &theta_hat.values, &spec.coefficient_names())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowIntervals {
    pub lambda: Interval,
    pub p: Interval,
    pub mu: Interval,
}

/// Two-sided standard normal quantile for coverage `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PogitError::Config(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

fn quad(v: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    g.dot(&(v * g)).max(0.0)
}

/// Per-row intervals for lambda, p and mu from covariance `v`.
pub fn intervals_problem(
    problem: &Problem,
    theta: &[f64],
    v: &DMatrix<f64>,
    level: f64,
) -> Result<Vec<RowIntervals>> {
    let k = problem.n_coefficients();
    if v.shape() != (k, k) || theta.len() != k {
        return Err(PogitError::Dimension(
            "covariance does not match the coefficients".into(),
        ));
    }
    let z = normal_quantile(level)?;
    let kl = problem.n_lambda();
    let kp = problem.n_p();
    let v_ll = v.view((0, 0), (kl, kl)).into_owned();
    let v_pp = v.view((kl, kl), (kp, kp)).into_owned();
    let (eta_l, eta_p) = problem.linear_predictors(theta);
    let link = problem.p_link();
    let mut out = Vec::with_capacity(problem.n_rows());
    for i in 0..problem.n_rows() {
        let xl: DVector<f64> = problem.x_lambda().row(i).transpose();
        let xp: DVector<f64> = problem.x_p().row(i).transpose();
        let off = problem.log_exposure(i);

        let log_lambda = eta_l[i] + off;
        let sd_l = quad(&v_ll, &xl).sqrt();
        let lambda = Interval {
            estimate: log_lambda.exp(),
            lo: (log_lambda - z * sd_l).exp(),
            hi: (log_lambda + z * sd_l).exp(),
        };

        let (p, log_p, ratio) = match link {
            Some(link) => {
                let e = link.eval(eta_p[i]);
                let sd_p = quad(&v_pp, &xp).sqrt();
                let p = Interval {
                    estimate: e.value,
                    lo: link.inverse(eta_p[i] - z * sd_p),
                    hi: link.inverse(eta_p[i] + z * sd_p),
                };
                (p, e.log_value, e.d1_ratio)
            }
            None => (
                Interval {
                    estimate: 1.0,
                    lo: 1.0,
                    hi: 1.0,
                },
                0.0,
                0.0,
            ),
        };

        let mut g = DVector::zeros(k);
        g.rows_mut(0, kl).copy_from(&xl);
        if kp > 0 {
            g.rows_mut(kl, kp).copy_from(&(xp * ratio));
        }
        let log_mu = log_lambda + log_p;
        let sd_mu = quad(v, &g).sqrt();
        let mu = Interval {
            estimate: lambda.estimate * p.estimate,
            lo: (log_mu - z * sd_mu).exp(),
            hi: (log_mu + z * sd_mu).exp(),
        };
        out.push(RowIntervals { lambda, p, mu });
    }
    Ok(out)
}

pub fn intervals(
    spec: &PogitSpec,
    theta_hat: &ParameterVector,
    v: &DMatrix<f64>,
    rows: &Dataset,
    level: f64,
) -> Result<Vec<RowIntervals>> {
    let problem = Problem::new(spec, rows)?;
    intervals_problem(&problem, &theta_hat.values, v, level)
}

/// Wald intervals on the coefficients themselves.
pub fn coefficient_intervals(theta: &[f64], v: &DMatrix<f64>, level: f64) -> Result<Vec<Interval>> {
    let z = normal_quantile(level)?;
    Ok(theta
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let sd = v[(j, j)].max(0.0).sqrt();
            Interval {
                estimate: t,
                lo: t - z * sd,
                hi: t + z * sd,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DesignBuilder, Term};
    use crate::link::expit;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn identity_sandwich_on_dyadic_diagonal_is_exact() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0, 0.5]));
        let s = SandwichCovariance::from_parts(a.clone(), a, &names(3)).unwrap();
        assert_eq!(
            s.v,
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25, 2.0]))
        );
        assert_eq!(&s.v, s.model_based());
    }

    #[test]
    fn identity_sandwich_on_dense_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let s = SandwichCovariance::from_parts(a.clone(), a.clone(), &names(3)).unwrap();
        let inv = a.try_inverse().unwrap();
        assert!((&s.v - &inv).amax() <= 1e-12 * inv.amax());
        assert_eq!(s.v, s.v.transpose());
    }

    #[test]
    fn singular_hessian_reports_direction() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let err = SandwichCovariance::from_parts(a.clone(), a, &names(2)).unwrap_err();
        let PogitError::RankDeficient { directions } = err else {
            panic!("expected rank deficiency");
        };
        assert_eq!(directions.len(), 1);
        let d = &directions[0];
        assert!((d[0].1 - d[1].1).abs() < 1e-12);
    }

    fn one_row() -> (Problem, Vec<f64>) {
        let x = DMatrix::from_element(1, 1, 1.0);
        let problem =
            Problem::from_matrices(x.clone(), x, &[1], crate::link::LinkFunction::Logit).unwrap();
        (problem, vec![0.0, 0.0])
    }

    #[test]
    fn zero_covariance_collapses_intervals() {
        let (problem, theta) = one_row();
        let r = intervals_problem(&problem, &theta, &DMatrix::zeros(2, 2), 0.9).unwrap();
        for iv in [r[0].lambda, r[0].p, r[0].mu] {
            assert_eq!(iv.lo, iv.estimate);
            assert_eq!(iv.hi, iv.estimate);
        }
    }

    #[test]
    fn logit_scale_interval_at_zero() {
        let (problem, theta) = one_row();
        let var = 0.3;
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, var]));
        let r = intervals_problem(&problem, &theta, &v, 0.9).unwrap();
        let half = 1.644854 * f64::sqrt(var);
        assert!((r[0].p.lo - expit(-half)).abs() < 1e-6);
        assert!((r[0].p.hi - expit(half)).abs() < 1e-6);
    }

    #[test]
    fn wider_level_nests_narrower() {
        let data = Dataset::new(vec![0, 3, 1, 5])
            .with_covariate("x", vec![-1.0, 0.5, 0.2, 2.0])
            .with_covariate("z", vec![0.3, -0.4, 1.0, 0.0]);
        let spec = PogitSpec::new(
            DesignBuilder::new(vec![Term::Intercept, Term::Linear { column: "x".into() }]),
            DesignBuilder::new(vec![Term::Linear { column: "z".into() }]),
        );
        let theta = ParameterVector::from_blocks(&[0.1, 0.4], &[2.0]);
        let v = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 4.0]);
        let narrow = intervals(&spec, &theta, &v, &data, 0.9).unwrap();
        let wide = intervals(&spec, &theta, &v, &data, 0.95).unwrap();
        for (n, w) in narrow.iter().zip(&wide) {
            for (a, b) in [(n.lambda, w.lambda), (n.p, w.p), (n.mu, w.mu)] {
                assert!(b.lo <= a.lo && a.hi <= b.hi);
            }
            assert!(w.p.lo > 0.0 && w.p.hi < 1.0);
            assert!(w.lambda.lo > 0.0);
        }
    }

    #[test]
    fn level_outside_unit_interval_rejected() {
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(0.0).is_err());
        assert!((normal_quantile(0.95).unwrap() - 1.959964).abs() < 1e-6);
    }
}
