//! B-spline bases on a bounded domain with clamped boundary knots.
//!
//! Besides the basis matrix itself, this module produces the linear maps from
//! spline coefficients to first and second derivatives at chosen points. Those
//! maps are what monotonicity and convexity constraints are built from.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PogitError, Result};

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 3;

/// Default number of points used to discretize a shape constraint.
pub const DEFAULT_CONSTRAINT_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degree: usize,
    #[serde(default)]
    pub interior_knots: Vec<f64>,
    /// Closed interval `[lo, hi]`.
    pub domain: (f64, f64),
}

impl SplineSpec {
    pub fn new(degree: usize, interior_knots: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        let spec = SplineSpec {
            degree,
            interior_knots,
            domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `n_interior` equally spaced interior knots on `[lo, hi]`.
    pub fn uniform(degree: usize, n_interior: usize, lo: f64, hi: f64) -> Result<Self> {
        let step = (hi - lo) / (n_interior + 1) as f64;
        let knots = (1..=n_interior).map(|i| lo + step * i as f64).collect();
        Self::new(degree, knots, (lo, hi))
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.domain;
        if self.degree > MAX_DEGREE {
            return Err(PogitError::UnsupportedDegree {
                degree: self.degree,
                what: "basis construction (maximum is cubic)",
            });
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(PogitError::InvalidSpline(format!(
                "domain [{lo}, {hi}] must be a finite interval with lo < hi"
            )));
        }
        for (i, &k) in self.interior_knots.iter().enumerate() {
            if !(k > lo && k < hi) {
                return Err(PogitError::InvalidSpline(format!(
                    "interior knot {k} is not strictly inside [{lo}, {hi}]"
                )));
            }
            if i > 0 && k <= self.interior_knots[i - 1] {
                return Err(PogitError::InvalidSpline(format!(
                    "interior knots must be strictly ascending ({} then {k})",
                    self.interior_knots[i - 1]
                )));
            }
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.degree + 1 + self.interior_knots.len()
    }

    /// Full knot vector with the boundary knots repeated `degree + 1` times.
    pub fn knot_vector(&self) -> Vec<f64> {
        let (lo, hi) = self.domain;
        let reps = self.degree + 1;
        let mut t = Vec::with_capacity(2 * reps + self.interior_knots.len());
        t.extend(std::iter::repeat_n(lo, reps));
        t.extend_from_slice(&self.interior_knots);
        t.extend(std::iter::repeat_n(hi, reps));
        t
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.domain.0 && x <= self.domain.1
    }

    fn check_point(&self, x: f64) -> Result<()> {
        if !x.is_finite() || !self.contains(x) {
            return Err(PogitError::OutOfDomain {
                point: x,
                lo: self.domain.0,
                hi: self.domain.1,
            });
        }
        Ok(())
    }

    /// Index of the knot span containing `x`; the right endpoint belongs to the last span.
    fn span(&self, knots: &[f64], x: f64) -> usize {
        let n = self.n_basis();
        let p = self.degree;
        if x >= knots[n] {
            return n - 1;
        }
        let (mut low, mut high) = (p, n);
        let mut mid = (low + high) / 2;
        while x < knots[mid] || x >= knots[mid + 1] {
            if x < knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
            mid = (low + high) / 2;
        }
        mid
    }

    /// Nonzero basis values and derivatives up to `n_deriv` at `x`.
    ///
    /// Returns the first basis index and `ders[k][j]`, the k-th derivative of
    /// basis function `first + j`.
    fn local_derivatives(&self, knots: &[f64], x: f64, n_deriv: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.degree;
        let span = self.span(knots, x);
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; n_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let top = n_deriv.min(p);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=top {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().take(top + 1).skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        (span - p, ders)
    }

    fn derivative_matrix(&self, points: &[f64], order: usize) -> Result<DMatrix<f64>> {
        self.validate()?;
        let knots = self.knot_vector();
        let mut m = DMatrix::zeros(points.len(), self.n_basis());
        for (i, &x) in points.iter().enumerate() {
            self.check_point(x)?;
            let (first, ders) = self.local_derivatives(&knots, x, order);
            for (j, &v) in ders[order].iter().enumerate() {
                m[(i, first + j)] = v;
            }
        }
        Ok(m)
    }
}

/// Basis evaluations, one row per point and one column per coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix(pub DMatrix<f64>);

impl BasisMatrix {
    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn build_basis(points: &[f64], spec: &SplineSpec) -> Result<BasisMatrix> {
    spec.derivative_matrix(points, 0).map(BasisMatrix)
}

/// Map from coefficients to the first derivative of the spline at `eval_points`.
pub fn first_derivative_map(spec: &SplineSpec, eval_points: &[f64]) -> Result<DMatrix<f64>> {
    if spec.degree < 1 {
        return Err(PogitError::UnsupportedDegree {
            degree: spec.degree,
            what: "first derivative map (needs degree >= 1)",
        });
    }
    spec.derivative_matrix(eval_points, 1)
}

/// Map from coefficients to the second derivative of the spline at `eval_points`.
pub fn second_derivative_map(spec: &SplineSpec, eval_points: &[f64]) -> Result<DMatrix<f64>> {
    if spec.degree < 2 {
        return Err(PogitError::UnsupportedDegree {
            degree: spec.degree,
            what: "second derivative map (needs degree >= 2)",
        });
    }
    spec.derivative_matrix(eval_points, 2)
}

/// `points` evenly spaced values covering `[lo, hi]` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i + 1 == points {
                        hi
                    } else {
                        lo + step * i as f64
                    }
                })
                .collect()
        }
    }
}
