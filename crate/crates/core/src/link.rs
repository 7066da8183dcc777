//! Link functions for the rate and reporting-probability blocks.

use serde::{Deserialize, Serialize};

use crate::error::{PogitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LinkFunction {
    Log,
    Logit,
    /// Inverse link `lo + (hi - lo) * expit(eta)`, confining values to `(lo, hi)`.
    BoundedLogit {
        lo: f64,
        hi: f64,
    },
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(expit(eta)) = -log(1 + exp(-eta))`.
pub fn log_expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

/// Inverse link value together with the derivative ratios the likelihood needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEval {
    pub value: f64,
    pub log_value: f64,
    /// First derivative of the inverse link.
    pub d1: f64,
    /// Second derivative of the inverse link.
    pub d2: f64,
    /// `d1 / value`
    pub d1_ratio: f64,
    /// `d2 / value`
    pub d2_ratio: f64,
}

impl LinkFunction {
    pub fn validate(&self) -> Result<()> {
        if let LinkFunction::BoundedLogit { lo, hi } = *self {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(PogitError::InvalidLink(format!(
                    "bounded logit requires 0 <= lo < hi <= 1, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    /// `(lo, hi)` for the logistic family; `None` for the log link.
    fn logistic_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            LinkFunction::Log => None,
            LinkFunction::Logit => Some((0.0, 1.0)),
            LinkFunction::BoundedLogit { lo, hi } => Some((lo, hi)),
        }
    }

    pub fn inverse(&self, eta: f64) -> f64 {
        match self.logistic_bounds() {
            None => eta.exp(),
            Some((0.0, hi)) => hi * expit(eta),
            Some((lo, hi)) => lo + (hi - lo) * expit(eta),
        }
    }

    /// Link (the inverse of [`LinkFunction::inverse`]).
    pub fn forward(&self, value: f64) -> f64 {
        match self.logistic_bounds() {
            None => value.ln(),
            Some((lo, hi)) => {
                let s = (value - lo) / (hi - lo);
                (s / (1.0 - s)).ln()
            }
        }
    }

    pub fn eval(&self, eta: f64) -> LinkEval {
        match self.logistic_bounds() {
            None => {
                let v = eta.exp();
                LinkEval {
                    value: v,
                    log_value: eta,
                    d1: v,
                    d2: v,
                    d1_ratio: 1.0,
                    d2_ratio: 1.0,
                }
            }
            Some((lo, hi)) => {
                let s = expit(eta);
                let one_minus_s = expit(-eta);
                let width = hi - lo;
                let ds = s * one_minus_s;
                let curvature = one_minus_s - s;
                let d1 = width * ds;
                let d2 = d1 * curvature;
                if lo == 0.0 {
                    LinkEval {
                        value: hi * s,
                        log_value: hi.ln() + log_expit(eta),
                        d1,
                        d2,
                        d1_ratio: one_minus_s,
                        d2_ratio: one_minus_s * curvature,
                    }
                } else {
                    let value = lo + width * s;
                    LinkEval {
                        value,
                        log_value: value.ln(),
                        d1,
                        d2,
                        d1_ratio: d1 / value,
                        d2_ratio: d2 / value,
                    }
                }
            }
        }
    }
}

pub fn inverse_link(link: &LinkFunction, eta: f64) -> f64 {
    link.inverse(eta)
}
