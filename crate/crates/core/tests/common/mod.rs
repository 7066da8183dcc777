#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pogit::design::{DesignBuilder, Term};
use pogit::model::{Order, PogitSpec, Problem};
use pogit::Dataset;
use rand::Rng;

/// Fourth-order central difference of `f` along coordinate `j`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], j: usize, h: f64) -> f64 {
    let at = |s: f64| {
        let mut y = x.to_vec();
        y[j] += s;
        f(&y)
    };
    (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
}

pub fn fd_gradient(problem: &Problem, theta: &[f64], h: f64) -> DVector<f64> {
    let f = |t: &[f64]| problem.nll(t).unwrap();
    DVector::from_iterator(
        theta.len(),
        (0..theta.len()).map(|j| central_diff(&f, theta, j, h)),
    )
}

/// Central differences of the analytic gradient, symmetrized.
pub fn fd_hessian(problem: &Problem, theta: &[f64], h: f64) -> DMatrix<f64> {
    let k = theta.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        let g = |t: &[f64]| {
            problem
                .evaluate(t, Order::Gradient)
                .unwrap()
                .gradient
                .unwrap()[i]
        };
        for j in 0..k {
            m[(i, j)] = central_diff(&g, theta, j, h);
        }
    }
    (&m + m.transpose()) * 0.5
}

/// `max |a - b| / max |b|`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Intercept plus one slope per block on columns `x` and `z`, with exposure.
pub fn random_problem<R: Rng>(rng: &mut R) -> (PogitSpec, Dataset, Vec<f64>) {
    let n = rng.gen_range(5..40);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let e: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let y: Vec<u64> = (0..n).map(|_| rng.gen_range(0..12)).collect();
    let data = Dataset::new(y)
        .with_covariate("x", x)
        .with_covariate("z", z)
        .with_exposure(e);
    let spec = PogitSpec::new(
        DesignBuilder::new(vec![Term::Intercept, Term::Linear { column: "x".into() }]),
        DesignBuilder::new(vec![Term::Intercept, Term::Linear { column: "z".into() }]),
    );
    let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (spec, data, theta)
}
