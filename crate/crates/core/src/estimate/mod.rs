//! Constrained, penalized maximum-likelihood fitting.

mod constraints;
pub mod qp;
pub mod solver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use constraints::{ConstraintSet, GaussianPrior, LinearConstraint, Sign};
use solver::{Objective, Polyhedron, SolverOptions};

use crate::dataset::Dataset;
use crate::design::DesignBuilder;
use crate::error::{PogitError, Result};
use crate::model::{Evaluation, Order, ParameterVector, PogitSpec, Problem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; zero when absent. Projected onto the feasible set.
    pub init: Option<Vec<f64>>,
    pub lower: f64,
    pub upper: f64,
    pub feasibility_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-6,
            max_iter: 500,
            init: None,
            lower: -20.0,
            upper: 20.0,
            feasibility_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ParameterVector,
    pub names: Vec<String>,
    /// Penalized objective at `theta_hat`.
    pub objective: f64,
    /// Negative log-likelihood without prior terms.
    pub nll: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub kkt_residual: f64,
    pub active_constraints: Vec<String>,
    pub objective_trace: Vec<f64>,
}

struct Penalized<'a> {
    problem: &'a Problem,
    priors: &'a [GaussianPrior],
}

impl Objective for Penalized<'_> {
    fn dim(&self) -> usize {
        self.problem.n_coefficients()
    }

    fn evaluate(&self, x: &DVector<f64>, order: Order) -> Result<Evaluation> {
        let mut eval = self.problem.evaluate(x.as_slice(), order)?;
        for prior in self.priors {
            eval.value += prior.penalty(x);
            if let Some(g) = eval.gradient.as_mut() {
                *g += prior.gradient(x);
            }
            if let Some(h) = eval.hessian.as_mut() {
                *h += prior.hessian();
            }
        }
        Ok(eval)
    }
}

/// Box bounds followed by the linear rows, all as `a . theta <= b`.
fn feasible_region(
    constraints: &ConstraintSet,
    names: &[String],
    options: &FitOptions,
) -> Polyhedron {
    let k = names.len();
    let (lo, hi) = constraints.box_bounds(k, (options.lower, options.upper));
    let m = 2 * k + constraints.linear.len();
    let mut rows = DMatrix::zeros(m, k);
    let mut upper = DVector::zeros(m);
    let mut labels = Vec::with_capacity(m);
    for j in 0..k {
        rows[(2 * j, j)] = 1.0;
        upper[2 * j] = hi[j];
        labels.push(format!("{} <= {}", names[j], hi[j]));
        rows[(2 * j + 1, j)] = -1.0;
        upper[2 * j + 1] = -lo[j];
        labels.push(format!("{} >= {}", names[j], lo[j]));
    }
    for (r, c) in constraints.linear.iter().enumerate() {
        let i = 2 * k + r;
        for (j, &v) in c.coefficients.iter().enumerate() {
            rows[(i, j)] = v;
        }
        upper[i] = c.upper;
        labels.push(c.label.clone());
    }
    Polyhedron::new(rows, upper, labels)
}

/// Fit a compiled problem. `names` labels the coefficients in diagnostics.
pub fn fit_problem(
    problem: &Problem,
    constraints: &ConstraintSet,
    priors: &[GaussianPrior],
    names: Vec<String>,
    options: &FitOptions,
) -> Result<FitResult> {
    let k = problem.n_coefficients();
    if problem.n_rows() == 0 {
        return Err(PogitError::InvalidData(
            "cannot fit an empty dataset".into(),
        ));
    }
    if names.len() != k {
        return Err(PogitError::Dimension(format!(
            "{} names for {k} coefficients",
            names.len()
        )));
    }
    constraints.validate(k)?;
    for prior in priors {
        prior.validate(k)?;
    }
    let x0 = match &options.init {
        Some(v) if v.len() == k => DVector::from_column_slice(v),
        Some(v) => {
            return Err(PogitError::Dimension(format!(
                "initial point has {} entries, model has {k} coefficients",
                v.len()
            )))
        }
        None => DVector::zeros(k),
    };
    let region = feasible_region(constraints, &names, options);
    let objective = Penalized { problem, priors };
    let sol = solver::minimize(
        &objective,
        &region,
        x0,
        &SolverOptions {
            tol: options.tol,
            max_iter: options.max_iter,
            feasibility_tol: options.feasibility_tol,
        },
    )?;
    let nll = problem.nll(sol.x.as_slice())?;
    Ok(FitResult {
        theta_hat: ParameterVector::new(sol.x.iter().copied().collect(), problem.n_lambda()),
        names,
        objective: sol.value,
        nll,
        converged: sol.converged,
        n_iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        active_constraints: sol
            .active
            .iter()
            .map(|&j| region.labels[j].clone())
            .collect(),
        objective_trace: sol.trace,
    })
}

pub fn fit(spec: &PogitSpec, data: &Dataset, options: &FitOptions) -> Result<FitResult> {
    let problem = Problem::new(spec, data)?;
    fit_problem(
        &problem,
        &spec.constraints,
        &spec.priors,
        spec.coefficient_names(),
        options,
    )
}

/// Plain Poisson regression (p fixed at one).
pub fn fit_poisson(
    design: &DesignBuilder,
    data: &Dataset,
    options: &FitOptions,
) -> Result<FitResult> {
    fit(&PogitSpec::poisson(design.clone()), data, options)
}
