//! Design matrices assembled from named covariate columns.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{PogitError, Result};
use crate::splines::{build_basis, SplineSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Linear { column: String },
    Spline { column: String, spline: SplineSpec },
}

impl Term {
    pub fn n_columns(&self) -> usize {
        match self {
            Term::Intercept | Term::Linear { .. } => 1,
            Term::Spline { spline, .. } => spline.n_basis(),
        }
    }

    /// Name used to refer to the term in constraints and priors.
    pub fn label(&self) -> &str {
        match self {
            Term::Intercept => "intercept",
            Term::Linear { column } | Term::Spline { column, .. } => column,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        match self {
            Term::Intercept => vec!["intercept".into()],
            Term::Linear { column } => vec![column.clone()],
            Term::Spline { column, spline } => (0..spline.n_basis())
                .map(|j| format!("{column}_bs{j}"))
                .collect(),
        }
    }

    fn source_column(&self) -> Option<&str> {
        match self {
            Term::Intercept => None,
            Term::Linear { column } | Term::Spline { column, .. } => Some(column),
        }
    }
}

/// Ordered list of terms making up one linear predictor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DesignBuilder {
    pub terms: Vec<Term>,
}

impl DesignBuilder {
    pub fn new(terms: Vec<Term>) -> Self {
        DesignBuilder { terms }
    }

    pub fn empty() -> Self {
        DesignBuilder::default()
    }

    pub fn is_empty(&self) -> bool {
        self.n_columns() == 0
    }

    pub fn n_columns(&self) -> usize {
        self.terms.iter().map(Term::n_columns).sum()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.terms.iter().flat_map(Term::column_names).collect()
    }

    /// Column offset and width of the term labelled `label`.
    pub fn term_range(&self, label: &str) -> Option<(usize, &Term)> {
        let mut offset = 0;
        for term in &self.terms {
            if term.label() == label {
                return Some((offset, term));
            }
            offset += term.n_columns();
        }
        None
    }

    pub fn referenced_columns(&self) -> Vec<&str> {
        self.terms.iter().filter_map(Term::source_column).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.column_names();
        let mut seen = std::collections::BTreeSet::new();
        for name in &names {
            if !seen.insert(name) {
                return Err(PogitError::Schema(format!(
                    "duplicate design column '{name}'"
                )));
            }
        }
        for term in &self.terms {
            if let Term::Spline { spline, .. } = term {
                spline.validate()?;
            }
        }
        Ok(())
    }

    pub fn build(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let n = data.len();
        let mut x = DMatrix::zeros(n, self.n_columns());
        let mut offset = 0;
        for term in &self.terms {
            match term {
                Term::Intercept => x.column_mut(offset).fill(1.0),
                Term::Linear { column } => {
                    let values = data.column(column)?;
                    x.column_mut(offset).copy_from_slice(values);
                }
                Term::Spline { column, spline } => {
                    let values = data.column(column)?;
                    let basis = build_basis(values, spline)?.into_inner();
                    x.columns_mut(offset, basis.ncols()).copy_from(&basis);
                }
            }
            offset += term.n_columns();
        }
        Ok(x)
    }

    /// One design row from a covariate record.
    pub fn build_row(&self, record: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.n_columns());
        for term in &self.terms {
            let lookup = |c: &str| {
                record
                    .get(c)
                    .copied()
                    .ok_or_else(|| PogitError::Schema(format!("record is missing covariate '{c}'")))
            };
            match term {
                Term::Intercept => row.push(1.0),
                Term::Linear { column } => row.push(lookup(column)?),
                Term::Spline { column, spline } => {
                    let basis = build_basis(&[lookup(column)?], spline)?;
                    row.extend(basis.matrix().row(0).iter());
                }
            }
        }
        Ok(row)
    }
}
