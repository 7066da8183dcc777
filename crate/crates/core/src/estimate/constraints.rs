use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PogitError, Result};

/// `coefficients . theta <= upper`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coefficients: Vec<f64>,
    pub upper: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    NonNegative,
    NonPositive,
}

/// Linear inequalities plus per-coefficient box bounds.
///
/// Coefficients without an explicit bound fall back to the bounds in the fit options.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub linear: Vec<LinearConstraint>,
    pub bounds: BTreeMap<usize, (f64, f64)>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty() && self.bounds.is_empty()
    }

    pub fn push(&mut self, coefficients: Vec<f64>, upper: f64, label: impl Into<String>) {
        self.linear.push(LinearConstraint {
            coefficients,
            upper,
            label: label.into(),
        });
    }

    /// Pin the sign of coefficient `index`. Strict signs are relaxed to non-strict.
    pub fn sign(
        mut self,
        n_coefficients: usize,
        index: usize,
        sign: Sign,
        label: impl Into<String>,
    ) -> Self {
        let mut a = vec![0.0; n_coefficients];
        a[index] = match sign {
            Sign::NonNegative => -1.0,
            Sign::NonPositive => 1.0,
        };
        self.push(a, 0.0, label);
        self
    }

    /// One constraint per row of `map`: `map_row . theta[offset..] >= 0` (or `<= 0`).
    pub fn add_map_rows(
        &mut self,
        n_coefficients: usize,
        offset: usize,
        map: &DMatrix<f64>,
        sign: Sign,
        label: &str,
    ) {
        let flip = match sign {
            Sign::NonNegative => -1.0,
            Sign::NonPositive => 1.0,
        };
        for (r, row) in map.row_iter().enumerate() {
            let mut a = vec![0.0; n_coefficients];
            for (j, &v) in row.iter().enumerate() {
                a[offset + j] = flip * v;
            }
            self.push(a, 0.0, format!("{label}[{r}]"));
        }
    }

    pub fn with_bound(mut self, index: usize, lo: f64, hi: f64) -> Self {
        self.bounds.insert(index, (lo, hi));
        self
    }

    pub fn validate(&self, n_coefficients: usize) -> Result<()> {
        for c in &self.linear {
            if c.coefficients.len() != n_coefficients {
                return Err(PogitError::Dimension(format!(
                    "constraint '{}' has {} coefficients, model has {n_coefficients}",
                    c.label,
                    c.coefficients.len()
                )));
            }
            if !c.upper.is_finite() || c.coefficients.iter().any(|v| !v.is_finite()) {
                return Err(PogitError::Config(format!(
                    "constraint '{}' is not finite",
                    c.label
                )));
            }
        }
        for (&i, &(lo, hi)) in &self.bounds {
            if i >= n_coefficients || lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(PogitError::Config(format!(
                    "invalid bound ({lo}, {hi}) on coefficient {i}"
                )));
            }
        }
        Ok(())
    }

    /// Whether any linear constraint involves a coefficient in `range`.
    pub fn touches(&self, range: std::ops::Range<usize>) -> bool {
        self.linear
            .iter()
            .any(|c| c.coefficients[range.clone()].iter().any(|&v| v != 0.0))
    }

    pub(crate) fn box_bounds(&self, n: usize, default: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![default.0; n];
        let mut hi = vec![default.1; n];
        for (&i, &(l, h)) in &self.bounds {
            lo[i] = l;
            hi[i] = h;
        }
        (lo, hi)
    }
}

/// Quadratic penalty `(weight / 2) * ||C theta - target||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub functional: DMatrix<f64>,
    pub target: DVector<f64>,
    pub weight: f64,
    pub label: String,
    gram: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(
        functional: DMatrix<f64>,
        target: DVector<f64>,
        weight: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if functional.nrows() != target.len() {
            return Err(PogitError::Dimension(format!(
                "prior functional has {} rows but target has {} entries",
                functional.nrows(),
                target.len()
            )));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(PogitError::Config(format!(
                "prior weight must be finite and >= 0, got {weight}"
            )));
        }
        let gram = functional.tr_mul(&functional);
        Ok(GaussianPrior {
            functional,
            target,
            weight,
            label: label.into(),
            gram,
        })
    }

    /// Ridge penalty pulling each listed coefficient toward `target`.
    pub fn ridge(
        n_coefficients: usize,
        indices: &[usize],
        target: f64,
        weight: f64,
    ) -> Result<Self> {
        let mut c = DMatrix::zeros(indices.len(), n_coefficients);
        for (r, &i) in indices.iter().enumerate() {
            c[(r, i)] = 1.0;
        }
        Self::new(
            c,
            DVector::from_element(indices.len(), target),
            weight,
            "ridge",
        )
    }

    /// Pull every row's linear predictor of one block toward `target`.
    ///
    /// `design` holds the block's design rows; `offset` is the block's first coefficient.
    pub fn on_linear_predictor(
        n_coefficients: usize,
        offset: usize,
        design: &DMatrix<f64>,
        target: f64,
        weight: f64,
    ) -> Result<Self> {
        let mut c = DMatrix::zeros(design.nrows(), n_coefficients);
        c.columns_mut(offset, design.ncols()).copy_from(design);
        Self::new(
            c,
            DVector::from_element(design.nrows(), target),
            weight,
            "linear_predictor",
        )
    }

    /// Pull the average linear predictor of one block toward `target`.
    pub fn on_mean_linear_predictor(
        n_coefficients: usize,
        offset: usize,
        design: &DMatrix<f64>,
        target: f64,
        weight: f64,
    ) -> Result<Self> {
        let mut c = DMatrix::zeros(1, n_coefficients);
        let n = design.nrows().max(1) as f64;
        for j in 0..design.ncols() {
            c[(0, offset + j)] = design.column(j).sum() / n;
        }
        Self::new(
            c,
            DVector::from_element(1, target),
            weight,
            "mean_linear_predictor",
        )
    }

    pub fn validate(&self, n_coefficients: usize) -> Result<()> {
        if self.functional.ncols() != n_coefficients {
            return Err(PogitError::Dimension(format!(
                "prior '{}' has {} columns, model has {n_coefficients}",
                self.label,
                self.functional.ncols()
            )));
        }
        Ok(())
    }

    pub fn touches(&self, range: std::ops::Range<usize>) -> bool {
        self.weight > 0.0
            && range
                .into_iter()
                .any(|j| self.functional.column(j).iter().any(|&v| v != 0.0))
    }

    fn residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.functional * theta - &self.target
    }

    pub fn penalty(&self, theta: &DVector<f64>) -> f64 {
        0.5 * self.weight * self.residual(theta).norm_squared()
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.functional.tr_mul(&self.residual(theta)) * self.weight
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        &self.gram * self.weight
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn prior_penalty_matches_direct_residual() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, -1.0, 1.0]);
        let prior = GaussianPrior::new(c.clone(), dvector![0.5, -1.0], 3.0, "p").unwrap();
        let theta = dvector![0.3, -0.2, 1.1];
        let r = &c * &theta - dvector![0.5, -1.0];
        assert!((prior.penalty(&theta) - 1.5 * r.norm_squared()).abs() < 1e-12);
        assert!((prior.gradient(&theta) - c.transpose() * r * 3.0).norm() < 1e-12);
    }

    #[test]
    fn sign_constraint_rows() {
        let set = ConstraintSet::new().sign(3, 1, Sign::NonNegative, "b");
        assert_eq!(set.linear[0].coefficients, vec![0.0, -1.0, 0.0]);
        assert!(set.touches(1..3));
        assert!(!set.touches(2..3));
    }
}
