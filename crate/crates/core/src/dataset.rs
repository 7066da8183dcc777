use std::collections::BTreeMap;

use crate::error::{PogitError, Result};

/// Covariates plus observed counts, with optional exposure and validation-only true counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub covariates: BTreeMap<String, Vec<f64>>,
    pub counts: Vec<u64>,
    pub exposure: Option<Vec<f64>>,
    pub true_counts: Option<Vec<u64>>,
}

impl Dataset {
    pub fn new(counts: Vec<u64>) -> Self {
        Dataset {
            counts,
            ..Default::default()
        }
    }

    pub fn with_covariate(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.covariates.insert(name.into(), values);
        self
    }

    pub fn with_exposure(mut self, exposure: Vec<f64>) -> Self {
        self.exposure = Some(exposure);
        self
    }

    pub fn with_true_counts(mut self, true_counts: Vec<u64>) -> Self {
        self.true_counts = Some(true_counts);
        self
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.covariates
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| PogitError::Schema(format!("missing covariate column '{name}'")))
    }

    /// Covariate values of row `i`, keyed by column name.
    pub fn record(&self, i: usize) -> BTreeMap<String, f64> {
        self.covariates
            .iter()
            .map(|(k, v)| (k.clone(), v[i]))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.counts.len();
        for (name, col) in &self.covariates {
            if col.len() != n {
                return Err(PogitError::InvalidData(format!(
                    "column '{name}' has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(PogitError::InvalidData(format!(
                    "column '{name}' has a non-finite value at row {i}"
                )));
            }
        }
        if let Some(e) = &self.exposure {
            if e.len() != n {
                return Err(PogitError::InvalidData(format!(
                    "exposure has {} rows, expected {n}",
                    e.len()
                )));
            }
            if let Some(i) = e.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(PogitError::InvalidData(format!(
                    "exposure must be positive and finite (row {i})"
                )));
            }
        }
        if let Some(t) = &self.true_counts {
            if t.len() != n {
                return Err(PogitError::InvalidData(format!(
                    "true counts have {} rows, expected {n}",
                    t.len()
                )));
            }
            if let Some(i) = (0..n).find(|&i| self.counts[i] > t[i]) {
                return Err(PogitError::InvalidData(format!(
                    "reported count {} exceeds true count {} at row {i}",
                    self.counts[i], t[i]
                )));
            }
        }
        Ok(())
    }

    /// Same covariates and exposure, with the counts replaced.
    pub fn with_counts(&self, counts: Vec<u64>) -> Self {
        Dataset {
            covariates: self.covariates.clone(),
            counts,
            exposure: self.exposure.clone(),
            true_counts: None,
        }
    }
}
