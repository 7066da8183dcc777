//! Declarative JSON model configuration.
//!
//! Coefficients are referred to as `lambda.<column>` / `p.<column>` (spline
//! columns are `<covariate>_bs<j>`); shape constraints refer to whole terms as
//! `lambda.<covariate>` / `p.<covariate>`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::{DesignBuilder, Term};
use crate::error::{PogitError, Result};
use crate::estimate::{ConstraintSet, FitOptions, GaussianPrior, Sign};
use crate::link::LinkFunction;
use crate::model::PogitSpec;
use crate::simulate::{SweepConfig, SyntheticConfig};
use crate::splines::{
    first_derivative_map, second_derivative_map, uniform_grid, DEFAULT_CONSTRAINT_POINTS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSchema {
    pub count: String,
    #[serde(default)]
    pub exposure: Option<String>,
    #[serde(default)]
    pub true_count: Option<String>,
    /// Covariate columns to load; every other non-count column when absent.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    #[serde(default)]
    pub terms: Vec<Term>,
    #[serde(default)]
    pub link: Option<LinkFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Lambda,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    Sign {
        coefficient: String,
        sign: Sign,
    },
    Bound {
        coefficient: String,
        lo: f64,
        hi: f64,
    },
    Monotone {
        term: String,
        direction: Direction,
        #[serde(default)]
        interval: Option<(f64, f64)>,
        #[serde(default)]
        points: Option<usize>,
    },
    Convex {
        term: String,
        #[serde(default)]
        interval: Option<(f64, f64)>,
        #[serde(default)]
        points: Option<usize>,
    },
    Concave {
        term: String,
        #[serde(default)]
        interval: Option<(f64, f64)>,
        #[serde(default)]
        points: Option<usize>,
    },
    /// `sum coefficients[name] * theta[name] <= upper`.
    Linear {
        coefficients: BTreeMap<String, f64>,
        upper: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Ridge {
        coefficients: Vec<String>,
        #[serde(default)]
        target: f64,
        weight: f64,
    },
    /// Every row's linear predictor of `block` toward `target`.
    LinearPredictor {
        block: Block,
        target: f64,
        weight: f64,
    },
    /// The average linear predictor of `block` toward `target`.
    MeanLinearPredictor {
        block: Block,
        target: f64,
        weight: f64,
    },
    Custom {
        rows: Vec<BTreeMap<String, f64>>,
        target: Vec<f64>,
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub data: DataSchema,
    pub lambda: BlockConfig,
    #[serde(default = "empty_block")]
    pub p: BlockConfig,
    #[serde(default)]
    pub constraints: Vec<ConstraintConfig>,
    #[serde(default)]
    pub priors: Vec<PriorConfig>,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

fn empty_block() -> BlockConfig {
    BlockConfig {
        terms: Vec::new(),
        link: None,
    }
}

fn default_level() -> f64 {
    0.9
}

fn sign_of(direction: Direction) -> Sign {
    match direction {
        Direction::Increasing => Sign::NonNegative,
        Direction::Decreasing => Sign::NonPositive,
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| PogitError::Config(format!("invalid model config: {e}")))
    }

    /// Designs and links only; constraints and priors need [`ModelConfig::build_spec`].
    fn base_spec(&self) -> Result<PogitSpec> {
        let mut spec = PogitSpec::new(
            DesignBuilder::new(self.lambda.terms.clone()),
            DesignBuilder::new(self.p.terms.clone()),
        );
        if let Some(link) = self.lambda.link {
            spec.lambda_link = link;
        }
        if let Some(link) = self.p.link {
            spec.p_link = link;
        }
        Ok(spec)
    }

    fn coefficient_index(names: &[String], name: &str) -> Result<usize> {
        names.iter().position(|n| n == name).ok_or_else(|| {
            PogitError::Config(format!(
                "unknown coefficient '{name}'; known: {}",
                names.join(", ")
            ))
        })
    }

    fn block_design(spec: &PogitSpec, block: Block) -> (&DesignBuilder, usize) {
        match block {
            Block::Lambda => (&spec.lambda_design, 0),
            Block::P => (&spec.p_design, spec.n_lambda()),
        }
    }

    /// Resolve `lambda.<label>` / `p.<label>` to the term and its first coefficient.
    fn term<'a>(spec: &'a PogitSpec, reference: &str) -> Result<(usize, &'a Term)> {
        let (block, label) = match reference.split_once('.') {
            Some(("lambda", l)) => (Block::Lambda, l),
            Some(("p", l)) => (Block::P, l),
            _ => {
                return Err(PogitError::Config(format!(
                    "term reference '{reference}' must look like 'lambda.<name>' or 'p.<name>'"
                )))
            }
        };
        let (design, base) = Self::block_design(spec, block);
        let (offset, term) = design
            .term_range(label)
            .ok_or_else(|| PogitError::Config(format!("unknown term '{reference}'")))?;
        Ok((base + offset, term))
    }

    fn shape_rows(
        spec: &PogitSpec,
        set: &mut ConstraintSet,
        reference: &str,
        derivative: usize,
        sign: Sign,
        interval: Option<(f64, f64)>,
        points: Option<usize>,
    ) -> Result<()> {
        let k = spec.n_coefficients();
        let (offset, term) = Self::term(spec, reference)?;
        let kind = if derivative == 1 {
            "monotone"
        } else {
            "curvature"
        };
        let label = format!("{reference} {kind}");
        match term {
            Term::Spline { spline, .. } => {
                let (lo, hi) = interval.unwrap_or(spline.domain);
                if !(spline.contains(lo) && spline.contains(hi) && lo < hi) {
                    return Err(PogitError::Config(format!(
                        "interval ({lo}, {hi}) for '{reference}' must lie inside the spline domain"
                    )));
                }
                let pts = uniform_grid(lo, hi, points.unwrap_or(DEFAULT_CONSTRAINT_POINTS));
                let map = if derivative == 1 {
                    first_derivative_map(spline, &pts)?
                } else {
                    second_derivative_map(spline, &pts)?
                };
                set.add_map_rows(k, offset, &map, sign, &label);
                Ok(())
            }
            Term::Linear { .. } if derivative == 1 => {
                let mut a = vec![0.0; k];
                a[offset] = match sign {
                    Sign::NonNegative => -1.0,
                    Sign::NonPositive => 1.0,
                };
                set.push(a, 0.0, label);
                Ok(())
            }
            _ => Err(PogitError::Config(format!(
                "{kind} constraint on '{reference}' needs a spline term"
            ))),
        }
    }

    /// Full model with constraints and priors; `data` supplies the rows that
    /// linear-predictor priors act on.
    pub fn build_spec(&self, data: &Dataset) -> Result<PogitSpec> {
        let mut spec = self.base_spec()?;
        spec.validate()?;
        let names = spec.coefficient_names();
        let k = names.len();
        let mut set = ConstraintSet::new();
        for c in &self.constraints {
            match c {
                ConstraintConfig::Sign { coefficient, sign } => {
                    let i = Self::coefficient_index(&names, coefficient)?;
                    set = set.sign(k, i, *sign, format!("{coefficient} sign"));
                }
                ConstraintConfig::Bound {
                    coefficient,
                    lo,
                    hi,
                } => {
                    let i = Self::coefficient_index(&names, coefficient)?;
                    set = set.with_bound(i, *lo, *hi);
                }
                ConstraintConfig::Monotone {
                    term,
                    direction,
                    interval,
                    points,
                } => Self::shape_rows(
                    &spec,
                    &mut set,
                    term,
                    1,
                    sign_of(*direction),
                    *interval,
                    *points,
                )?,
                ConstraintConfig::Convex {
                    term,
                    interval,
                    points,
                } => Self::shape_rows(
                    &spec,
                    &mut set,
                    term,
                    2,
                    Sign::NonNegative,
                    *interval,
                    *points,
                )?,
                ConstraintConfig::Concave {
                    term,
                    interval,
                    points,
                } => Self::shape_rows(
                    &spec,
                    &mut set,
                    term,
                    2,
                    Sign::NonPositive,
                    *interval,
                    *points,
                )?,
                ConstraintConfig::Linear {
                    coefficients,
                    upper,
                } => {
                    let mut a = vec![0.0; k];
                    for (name, v) in coefficients {
                        a[Self::coefficient_index(&names, name)?] = *v;
                    }
                    set.push(a, *upper, format!("linear[{}]", set.linear.len()));
                }
            }
        }
        spec.constraints = set;

        for p in &self.priors {
            let prior = match p {
                PriorConfig::Ridge {
                    coefficients,
                    target,
                    weight,
                } => {
                    let idx = coefficients
                        .iter()
                        .map(|c| Self::coefficient_index(&names, c))
                        .collect::<Result<Vec<_>>>()?;
                    GaussianPrior::ridge(k, &idx, *target, *weight)?
                }
                PriorConfig::LinearPredictor {
                    block,
                    target,
                    weight,
                } => {
                    let (design, offset) = Self::block_design(&spec, *block);
                    GaussianPrior::on_linear_predictor(
                        k,
                        offset,
                        &design.build(data)?,
                        *target,
                        *weight,
                    )?
                }
                PriorConfig::MeanLinearPredictor {
                    block,
                    target,
                    weight,
                } => {
                    let (design, offset) = Self::block_design(&spec, *block);
                    GaussianPrior::on_mean_linear_predictor(
                        k,
                        offset,
                        &design.build(data)?,
                        *target,
                        *weight,
                    )?
                }
                PriorConfig::Custom {
                    rows,
                    target,
                    weight,
                } => {
                    let mut c = nalgebra::DMatrix::zeros(rows.len(), k);
                    for (r, row) in rows.iter().enumerate() {
                        for (name, v) in row {
                            c[(r, Self::coefficient_index(&names, name)?)] = *v;
                        }
                    }
                    GaussianPrior::new(
                        c,
                        nalgebra::DVector::from_column_slice(target),
                        *weight,
                        "custom",
                    )?
                }
            };
            spec.priors.push(prior);
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Covariates the designs read from the data.
    pub fn referenced_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self
            .lambda
            .terms
            .iter()
            .chain(&self.p.terms)
            .filter_map(|t| match t {
                Term::Intercept => None,
                Term::Linear { column } | Term::Spline { column, .. } => Some(column.clone()),
            })
            .collect();
        cols.sort();
        cols.dedup();
        cols
    }
}

/// Sweeps run by `simulate-bound`; both default sweeps when the file omits them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundStudyConfig {
    #[serde(default = "default_sweeps")]
    pub sweeps: Vec<SweepConfig>,
}

fn default_sweeps() -> Vec<SweepConfig> {
    vec![SweepConfig::default(), SweepConfig::rate_sweep()]
}

impl Default for BoundStudyConfig {
    fn default() -> Self {
        BoundStudyConfig {
            sweeps: default_sweeps(),
        }
    }
}

impl BoundStudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| PogitError::Config(format!("invalid bound-study config: {e}")))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        for s in &mut self.sweeps {
            s.seed = seed;
        }
        self
    }
}

pub fn synthetic_from_json(text: &str) -> Result<SyntheticConfig> {
    serde_json::from_str(text)
        .map_err(|e| PogitError::Config(format!("invalid synthetic config: {e}")))
}
