//! Feasible-direction sequential quadratic programming over a polyhedron.
//!
//! Every iterate stays inside `{x : A x <= b}`. Each step solves a QP whose
//! Hessian is the objective Hessian with its eigenvalues pushed away from zero,
//! followed by an Armijo backtracking line search. Stationarity is measured by
//! the norm of the projected-gradient step
//! `argmin_d g'd + 0.5 |d|^2  s.t.  A (x + d) <= b`, which is zero exactly at a
//! KKT point.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::qp::{self, QpError};
use crate::error::{PogitError, Result};
use crate::model::{Evaluation, Order};

pub trait Objective {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &DVector<f64>, order: Order) -> Result<Evaluation>;
}

/// `{x : rows . x <= upper}` with a label per row.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    pub rows: DMatrix<f64>,
    pub upper: DVector<f64>,
    pub labels: Vec<String>,
}

impl Polyhedron {
    pub fn new(rows: DMatrix<f64>, upper: DVector<f64>, labels: Vec<String>) -> Self {
        Polyhedron {
            rows,
            upper,
            labels,
        }
    }

    /// Largest violation `max_j (a_j . x - b_j)`, or 0 if feasible.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let slack = &self.rows * x - &self.upper;
        slack.iter().fold(0.0f64, |acc, &s| acc.max(s))
    }

    /// Rows whose slack is within `tol` (scaled by the row norm).
    pub fn active_rows(&self, x: &DVector<f64>, tol: f64) -> Vec<usize> {
        let slack = &self.rows * x - &self.upper;
        (0..self.rows.nrows())
            .filter(|&j| slack[j].abs() <= tol * (1.0 + self.rows.row(j).norm()))
            .collect()
    }

    fn map_qp_error(&self, e: QpError) -> PogitError {
        match e {
            QpError::Infeasible(j) => PogitError::Infeasible {
                constraint: self.labels[j].clone(),
            },
            QpError::NotPositiveDefinite => PogitError::NotPositiveDefinite,
            QpError::IterationLimit => PogitError::SubproblemStalled,
        }
    }

    /// Solve `min g'd + 0.5 d'Hd` subject to `A (x + d) <= b`.
    fn step(&self, x: &DVector<f64>, g: &DVector<f64>, h: &DMatrix<f64>) -> Result<DVector<f64>> {
        let c = -&self.rows;
        let d = &self.rows * x - &self.upper;
        qp::solve(h, g, &c, &d)
            .map(|s| s.x)
            .map_err(|e| self.map_qp_error(e))
    }

    /// Euclidean projection of `x0`.
    pub fn project(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        let n = x0.len();
        let c = -&self.rows;
        let d = -&self.upper;
        qp::solve(&DMatrix::identity(n, n), &(-x0), &c, &d)
            .map(|s| s.x)
            .map_err(|e| self.map_qp_error(e))
    }

    /// Projected-gradient step at `x`; its max-norm is the stationarity residual.
    pub fn gradient_mapping(&self, x: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        let n = x.len();
        self.step(x, g, &DMatrix::identity(n, n))
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub feasibility_tol: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub trace: Vec<f64>,
    pub active: Vec<usize>,
}

/// Replace the spectrum of `h` by `max(|eig|, floor)`.
fn regularize(h: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let top = eig.eigenvalues.amax();
    let floor = (1e-8 * top).max(1e-10);
    let vals = eig.eigenvalues.map(|v| v.abs().max(floor));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    for i in 0..out.nrows() {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn value_or_inf<O: Objective>(obj: &O, x: &DVector<f64>) -> Result<f64> {
    match obj.evaluate(x, Order::Value) {
        Ok(e) if e.value.is_finite() => Ok(e.value),
        Ok(_) | Err(PogitError::NumericalOverflow { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

pub fn minimize<O: Objective>(
    obj: &O,
    region: &Polyhedron,
    x0: DVector<f64>,
    opts: &SolverOptions,
) -> Result<Solution> {
    let mut x = if region.max_violation(&x0) > 0.0 {
        region.project(&x0)?
    } else {
        x0
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt_residual;
    let mut value;

    loop {
        let eval = obj.evaluate(&x, Order::Hessian)?;
        value = eval.value;
        let g = eval.gradient.expect("gradient requested");
        let h = eval.hessian.expect("hessian requested");
        trace.push(value);
        let pg = region.gradient_mapping(&x, &g)?;
        kkt_residual = pg.amax();
        if kkt_residual <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        let mut d = match region.step(&x, &g, &regularize(&h)) {
            Ok(d) => d,
            Err(PogitError::NotPositiveDefinite) => pg.clone(),
            Err(e) => return Err(e),
        };
        let mut slope = g.dot(&d);
        if slope.is_nan() || slope >= 0.0 {
            d = pg;
            slope = g.dot(&d);
        }

        // Near the optimum the predicted decrease drops below the rounding noise
        // of the objective; then steps are judged by stationarity instead.
        let noise = 1e-13 * (1.0 + value.abs());
        let mut accepted = None;
        let mut alpha = 1.0;
        while alpha * -slope > noise {
            let trial = &x + &d * alpha;
            let v = value_or_inf(obj, &trial)?;
            if v <= value + 1e-4 * alpha * slope {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let mut alpha = 1.0;
        while accepted.is_none() && alpha > 1e-9 {
            let trial = &x + &d * alpha;
            accepted = match obj.evaluate(&trial, Order::Gradient) {
                Ok(e) if e.value <= value + noise => {
                    let g_trial = e.gradient.expect("gradient requested");
                    let r = region.gradient_mapping(&trial, &g_trial)?.amax();
                    (r < kkt_residual).then_some(trial)
                }
                Ok(_) | Err(PogitError::NumericalOverflow { .. }) => None,
                Err(e) => return Err(e),
            };
            alpha *= 0.5;
        }
        match accepted {
            Some(next) => {
                x = next;
                iterations += 1;
            }
            // no further progress is resolvable in floating point
            None => break,
        }
    }

    let active = region.active_rows(&x, opts.feasibility_tol);
    Ok(Solution {
        x,
        value,
        converged,
        iterations,
        kkt_residual,
        trace,
        active,
    })
}
