//! Seeded data generation and the two simulation studies: the bound sweep over
//! `(theta_l, theta_p)` and the nonlinear spline deconvolution experiment.
//!
//! Replicate `r` always draws from RNG stream `r` of the master seed, so runs
//! are bitwise reproducible regardless of thread count, and every grid point of
//! a sweep sees the same underlying random numbers.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::{DesignBuilder, Term};
use crate::error::{PogitError, Result};
use crate::estimate::{fit, ConstraintSet, FitOptions, GaussianPrior, Sign};
use crate::link::{expit, LinkFunction};
use crate::model::{ParameterVector, PogitSpec, Problem};
use crate::rng;
use crate::splines::{second_derivative_map, uniform_grid, SplineSpec};
use crate::theory::{crlb, TwoCovariateSetting};

pub fn draw_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|_| PogitError::NumericalOverflow {
        row: usize::MAX,
        eta_lambda: mean.ln(),
        eta_p: f64::NAN,
    })?;
    Ok(d.sample(rng) as u64)
}

/// Gamma-Poisson draw with `Var = mean + dispersion * mean^2`.
pub fn draw_negative_binomial<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    dispersion: f64,
) -> Result<u64> {
    if dispersion <= 0.0 {
        return draw_poisson(rng, mean);
    }
    let shape = 1.0 / dispersion;
    let gamma = Gamma::new(shape, mean * dispersion)
        .map_err(|e| PogitError::Config(format!("invalid negative binomial: {e}")))?;
    let rate = gamma.sample(rng);
    draw_poisson(rng, rate)
}

/// Reported counts (and true counts in two-stage mode) for given rates and probabilities.
pub fn draw_counts<R: Rng + ?Sized>(
    rng: &mut R,
    lambda: &[f64],
    p: &[f64],
    two_stage: bool,
) -> Result<(Vec<u64>, Option<Vec<u64>>)> {
    let mut y = Vec::with_capacity(lambda.len());
    let mut y_true = Vec::with_capacity(if two_stage { lambda.len() } else { 0 });
    for (i, (&l, &q)) in lambda.iter().zip(p).enumerate() {
        if !l.is_finite() {
            return Err(PogitError::NumericalOverflow {
                row: i,
                eta_lambda: l.ln(),
                eta_p: f64::NAN,
            });
        }
        if two_stage {
            let total = draw_poisson(rng, l)?;
            let reported = Binomial::new(total, q)
                .map_err(|e| PogitError::Config(format!("invalid reporting probability {q}: {e}")))?
                .sample(rng);
            y_true.push(total);
            y.push(reported);
        } else {
            y.push(draw_poisson(rng, l * q)?);
        }
    }
    Ok((y, two_stage.then_some(y_true)))
}

pub const X_LAMBDA: &str = "x_lambda";
pub const X_P: &str = "x_p";

/// Two-covariate dataset `(x_lambda, x_p, y)` for the bound setting.
pub fn generate_two_covariate(
    setting: &TwoCovariateSetting,
    seed: u64,
    stream: u64,
    two_stage: bool,
) -> Result<Dataset> {
    setting.validate()?;
    let mut rng = rng::stream(seed, stream);
    let (xl, xp): (Vec<f64>, Vec<f64>) = (0..setting.n)
        .map(|_| setting.draw_covariates(&mut rng))
        .unzip();
    let lambda: Vec<f64> = xl
        .iter()
        .map(|x| (setting.theta_lambda * x).exp())
        .collect();
    let p: Vec<f64> = xp.iter().map(|x| expit(setting.theta_p * x)).collect();
    let (y, y_true) = draw_counts(&mut rng, &lambda, &p, two_stage)?;
    let mut data = Dataset::new(y)
        .with_covariate(X_LAMBDA, xl)
        .with_covariate(X_P, xp);
    if let Some(t) = y_true {
        data = data.with_true_counts(t);
    }
    Ok(data)
}

/// The model used to fit [`generate_two_covariate`] data: one slope per block, no intercepts.
pub fn two_covariate_spec() -> PogitSpec {
    PogitSpec::new(
        DesignBuilder::new(vec![Term::Linear {
            column: X_LAMBDA.into(),
        }]),
        DesignBuilder::new(vec![Term::Linear { column: X_P.into() }]),
    )
}

/// Replace the counts of `covariates` with draws from the model at `theta`.
pub fn generate_pogit(
    spec: &PogitSpec,
    theta: &ParameterVector,
    covariates: &Dataset,
    seed: u64,
    two_stage: bool,
) -> Result<Dataset> {
    let zeros = vec![0; covariates.len()];
    let problem = Problem::from_counts(spec, covariates, &zeros)?;
    let preds = problem.predictions(&theta.values)?;
    let lambda: Vec<f64> = preds.iter().map(|r| r.lambda).collect();
    let p: Vec<f64> = preds.iter().map(|r| r.p).collect();
    let mut rng = rng::stream(seed, 0);
    let (y, y_true) = draw_counts(&mut rng, &lambda, &p, two_stage)?;
    let mut data = covariates.with_counts(y);
    data.true_counts = y_true;
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    ThetaLambda,
    ThetaP,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::ThetaLambda => "theta_lambda",
            SweepParam::ThetaP => "theta_p",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub fixed: SweepParam,
    pub fixed_value: f64,
    pub swept: SweepParam,
    pub grid: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mu_lambda: f64,
    pub sigma_lambda: f64,
    pub sigma_p: f64,
    pub fit: FitOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fixed: SweepParam::ThetaLambda,
            fixed_value: 1.0,
            swept: SweepParam::ThetaP,
            grid: uniform_grid(-5.0, 5.0, 21),
            n: 50,
            replicates: 1000,
            seed: 1,
            mu_lambda: 0.0,
            sigma_lambda: 1.0,
            sigma_p: 1.0,
            fit: FitOptions::default(),
        }
    }
}

impl SweepConfig {
    /// The default companion sweep: `theta_p = 1` fixed, 17 values of `theta_l` in `[-2, 2]`.
    pub fn rate_sweep() -> Self {
        SweepConfig {
            fixed: SweepParam::ThetaP,
            swept: SweepParam::ThetaLambda,
            grid: uniform_grid(-2.0, 2.0, 17),
            ..SweepConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed == self.swept {
            return Err(PogitError::Config(
                "fixed and swept parameters must differ".into(),
            ));
        }
        if self.grid.is_empty() || self.grid.iter().any(|v| !v.is_finite()) {
            return Err(PogitError::Config(
                "sweep grid must be nonempty and finite".into(),
            ));
        }
        if self.replicates == 0 || self.n == 0 {
            return Err(PogitError::Config(
                "replicates and n must be at least 1".into(),
            ));
        }
        self.setting(self.grid[0]).validate()
    }

    fn setting(&self, value: f64) -> TwoCovariateSetting {
        let (tl, tp) = match self.swept {
            SweepParam::ThetaP => (self.fixed_value, value),
            SweepParam::ThetaLambda => (value, self.fixed_value),
        };
        TwoCovariateSetting {
            theta_lambda: tl,
            theta_p: tp,
            mu_lambda: self.mu_lambda,
            sigma_lambda: self.sigma_lambda,
            sigma_p: self.sigma_p,
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept_param: String,
    pub value: f64,
    pub mean_theta_lambda: f64,
    pub sd_theta_lambda: f64,
    pub mean_theta_p: f64,
    pub sd_theta_p: f64,
    pub crlb_sd_lambda: f64,
    pub crlb_sd_p: f64,
    pub n_converged: usize,
    /// Replicates excluded for non-convergence or numerical failure.
    pub n_failed: usize,
}

/// Sample mean and standard deviation (divisor `n - 1`).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Fit the two-slope model to one replicate; `None` if it failed or did not converge.
fn sweep_replicate(
    setting: &TwoCovariateSetting,
    seed: u64,
    r: usize,
    options: &FitOptions,
) -> Option<[f64; 2]> {
    let data = generate_two_covariate(setting, seed, r as u64, false).ok()?;
    let spec = two_covariate_spec();
    let fit = fit(&spec, &data, options).ok()?;
    fit.converged
        .then(|| [fit.theta_hat.values[0], fit.theta_hat.values[1]])
}

pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    config
        .grid
        .iter()
        .map(|&value| {
            let setting = config.setting(value);
            let fits: Vec<Option<[f64; 2]>> = (0..config.replicates)
                .into_par_iter()
                .map(|r| sweep_replicate(&setting, config.seed, r, &config.fit))
                .collect();
            let ok: Vec<[f64; 2]> = fits.iter().flatten().copied().collect();
            let tl: Vec<f64> = ok.iter().map(|t| t[0]).collect();
            let tp: Vec<f64> = ok.iter().map(|t| t[1]).collect();
            let (mean_l, sd_l) = mean_sd(&tl);
            let (mean_p, sd_p) = mean_sd(&tp);
            let bound = crlb(&setting).sd();
            Ok(SweepRow {
                swept_param: config.swept.name().into(),
                value,
                mean_theta_lambda: mean_l,
                sd_theta_lambda: sd_l,
                mean_theta_p: mean_p,
                sd_theta_p: sd_p,
                crlb_sd_lambda: bound[0],
                crlb_sd_p: bound[1],
                n_converged: ok.len(),
                n_failed: fits.len() - ok.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Unconstrained,
    BoundedLink,
    Prior,
    Convexity,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Unconstrained,
        Variant::BoundedLink,
        Variant::Prior,
        Variant::Convexity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Unconstrained => "unconstrained",
            Variant::BoundedLink => "bounded_link",
            Variant::Prior => "prior",
            Variant::Convexity => "convexity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    pub realizations: usize,
    pub variants: Vec<Variant>,
    pub seed: u64,
    pub spline_degree: usize,
    pub interior_knots: usize,
    /// Bounds of the bounded-logit variant.
    pub bounds: (f64, f64),
    /// Total weight of the prior pulling every row's p linear predictor to zero.
    /// Each row gets `prior_weight / n`, so the penalty is one nll unit when all
    /// p linear predictors equal one.
    pub prior_weight: f64,
    /// Where the rate's linear predictor is constrained convex in `x0`.
    pub lambda_convex_interval: (f64, f64),
    /// Where the p linear predictor is constrained convex in `x1`.
    pub p_convex_interval: (f64, f64),
    pub constraint_points: usize,
    pub grid_points: usize,
    pub fit: FitOptions,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 1000,
            realizations: 100,
            variants: Variant::ALL.to_vec(),
            seed: 2,
            spline_degree: 3,
            interior_knots: 5,
            bounds: (0.2, 0.8),
            prior_weight: 2.0,
            lambda_convex_interval: (0.25, 0.75),
            p_convex_interval: (0.5, 1.0),
            constraint_points: crate::splines::DEFAULT_CONSTRAINT_POINTS,
            grid_points: 101,
            fit: FitOptions::default(),
        }
    }
}

pub fn true_lambda(x0: f64) -> f64 {
    15.0 + (2.0 * std::f64::consts::PI * x0).cos().exp()
}

pub fn true_p(x1: f64) -> f64 {
    expit((2.0 * std::f64::consts::PI * x1).sin())
}

pub const X0: &str = "x0";
pub const X1: &str = "x1";

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 || self.n == 0 || self.grid_points < 2 {
            return Err(PogitError::Config(
                "n, realizations and grid_points must be positive".into(),
            ));
        }
        if self.variants.is_empty() {
            return Err(PogitError::Config(
                "at least one variant is required".into(),
            ));
        }
        for (lo, hi) in [self.lambda_convex_interval, self.p_convex_interval] {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(PogitError::Config(format!(
                    "convexity interval ({lo}, {hi}) must lie in [0, 1]"
                )));
            }
        }
        LinkFunction::BoundedLogit {
            lo: self.bounds.0,
            hi: self.bounds.1,
        }
        .validate()?;
        self.spline()?;
        Ok(())
    }

    fn spline(&self) -> Result<SplineSpec> {
        SplineSpec::uniform(self.spline_degree, self.interior_knots, 0.0, 1.0)
    }

    /// Model for one variant. `data` supplies the rows the prior acts on.
    pub fn variant_spec(&self, variant: Variant, data: &Dataset) -> Result<PogitSpec> {
        let spline = self.spline()?;
        let lambda = DesignBuilder::new(vec![Term::Spline {
            column: X0.into(),
            spline: spline.clone(),
        }]);
        let p = DesignBuilder::new(vec![Term::Spline {
            column: X1.into(),
            spline: spline.clone(),
        }]);
        let kl = lambda.n_columns();
        let k = kl + p.n_columns();
        let mut spec = PogitSpec::new(lambda, p.clone());
        match variant {
            Variant::Unconstrained => {}
            Variant::BoundedLink => {
                spec.p_link = LinkFunction::BoundedLogit {
                    lo: self.bounds.0,
                    hi: self.bounds.1,
                };
            }
            Variant::Prior => {
                let xp = p.build(data)?;
                let w = self.prior_weight / data.len() as f64;
                spec.priors
                    .push(GaussianPrior::on_linear_predictor(k, kl, &xp, 0.0, w)?);
            }
            Variant::Convexity => {
                let mut set = ConstraintSet::new();
                let (a, b) = self.lambda_convex_interval;
                let d =
                    second_derivative_map(&spline, &uniform_grid(a, b, self.constraint_points))?;
                set.add_map_rows(k, 0, &d, Sign::NonNegative, "lambda.x0 convex");
                let (a, b) = self.p_convex_interval;
                let d =
                    second_derivative_map(&spline, &uniform_grid(a, b, self.constraint_points))?;
                set.add_map_rows(k, kl, &d, Sign::NonNegative, "p.x1 convex");
                spec.constraints = set;
            }
        }
        Ok(spec)
    }

    /// Realization `r`: `x0, x1 ~ U(0, 1)`, `y ~ Poisson(lambda(x0) p(x1))`.
    pub fn generate(&self, r: usize) -> Result<Dataset> {
        let mut rng = rng::stream(self.seed, r as u64);
        let x0: Vec<f64> = (0..self.n).map(|_| rng.gen::<f64>()).collect();
        let x1: Vec<f64> = (0..self.n).map(|_| rng.gen::<f64>()).collect();
        let lambda: Vec<f64> = x0.iter().map(|&x| true_lambda(x)).collect();
        let p: Vec<f64> = x1.iter().map(|&x| true_p(x)).collect();
        let (y, _) = draw_counts(&mut rng, &lambda, &p, false)?;
        Ok(Dataset::new(y)
            .with_covariate(X0, x0)
            .with_covariate(X1, x1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    P,
    Lambda,
    Mu,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::P, Quantity::Lambda, Quantity::Mu];

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::P => "p",
            Quantity::Lambda => "lambda",
            Quantity::Mu => "mu",
        }
    }
}

/// One point of a fitted curve across realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub true_value: f64,
    pub fit_mean: f64,
    /// Pointwise minimum over realizations.
    pub fit_lo: f64,
    /// Pointwise maximum over realizations.
    pub fit_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    /// `p(x1)`, `lambda(x0)` and `mu` along `x0 = x1 = x`.
    pub p: Vec<CurvePoint>,
    pub lambda: Vec<CurvePoint>,
    pub mu: Vec<CurvePoint>,
    /// Integrated squared error of each fitted p curve, averaged over realizations.
    pub p_ise: f64,
    pub lambda_ise: f64,
    pub n_converged: usize,
    pub n_failed: usize,
}

impl VariantResult {
    pub fn curve(&self, q: Quantity) -> &[CurvePoint] {
        match q {
            Quantity::P => &self.p,
            Quantity::Lambda => &self.lambda,
            Quantity::Mu => &self.mu,
        }
    }
}

/// Trapezoid integral of `(a - b)^2` over a uniform grid on `[0, 1]`.
fn ise(grid: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let sq: Vec<f64> = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).collect();
    let h = grid[1] - grid[0];
    let inner: f64 = sq[1..sq.len() - 1].iter().sum();
    h * (inner + 0.5 * (sq[0] + sq[sq.len() - 1]))
}

struct FittedCurves {
    p: Vec<f64>,
    lambda: Vec<f64>,
}

fn fit_variant(
    config: &SyntheticConfig,
    variant: Variant,
    data: &Dataset,
    grid: &Dataset,
) -> Option<FittedCurves> {
    let spec = config.variant_spec(variant, data).ok()?;
    let fitted = fit(&spec, data, &config.fit).ok()?;
    if !fitted.converged {
        return None;
    }
    let zeros = vec![0; grid.len()];
    let preds = Problem::from_counts(&spec, grid, &zeros)
        .ok()?
        .predictions(&fitted.theta_hat.values)
        .ok()?;
    Some(FittedCurves {
        p: preds.iter().map(|r| r.p).collect(),
        lambda: preds.iter().map(|r| r.lambda).collect(),
    })
}

fn summarize(grid: &[f64], truth: &[f64], fits: &[Vec<f64>]) -> Vec<CurvePoint> {
    (0..grid.len())
        .map(|i| {
            let vals = fits.iter().map(|f| f[i]);
            let n = fits.len() as f64;
            CurvePoint {
                x: grid[i],
                true_value: truth[i],
                fit_mean: vals.clone().sum::<f64>() / n,
                fit_lo: vals.clone().fold(f64::INFINITY, f64::min),
                fit_hi: vals.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

pub fn run_synthetic(config: &SyntheticConfig) -> Result<Vec<VariantResult>> {
    config.validate()?;
    let x = uniform_grid(0.0, 1.0, config.grid_points);
    let grid = Dataset::new(vec![0; x.len()])
        .with_covariate(X0, x.clone())
        .with_covariate(X1, x.clone());
    let datasets: Vec<Dataset> = (0..config.realizations)
        .into_par_iter()
        .map(|r| config.generate(r))
        .collect::<Result<_>>()?;

    let true_p_curve: Vec<f64> = x.iter().map(|&v| true_p(v)).collect();
    let true_l_curve: Vec<f64> = x.iter().map(|&v| true_lambda(v)).collect();
    let true_mu: Vec<f64> = true_p_curve
        .iter()
        .zip(&true_l_curve)
        .map(|(a, b)| a * b)
        .collect();

    config
        .variants
        .iter()
        .map(|&variant| {
            let fits: Vec<Option<FittedCurves>> = datasets
                .par_iter()
                .map(|d| fit_variant(config, variant, d, &grid))
                .collect();
            let ok: Vec<&FittedCurves> = fits.iter().flatten().collect();
            if ok.is_empty() {
                return Err(PogitError::Config(format!(
                    "no realization of variant '{}' converged",
                    variant.name()
                )));
            }
            let ps: Vec<Vec<f64>> = ok.iter().map(|f| f.p.clone()).collect();
            let ls: Vec<Vec<f64>> = ok.iter().map(|f| f.lambda.clone()).collect();
            let mus: Vec<Vec<f64>> = ok
                .iter()
                .map(|f| f.p.iter().zip(&f.lambda).map(|(a, b)| a * b).collect())
                .collect();
            let k = ok.len() as f64;
            Ok(VariantResult {
                variant,
                p: summarize(&x, &true_p_curve, &ps),
                lambda: summarize(&x, &true_l_curve, &ls),
                mu: summarize(&x, &true_mu, &mus),
                p_ise: ps.iter().map(|f| ise(&x, f, &true_p_curve)).sum::<f64>() / k,
                lambda_ise: ls.iter().map(|f| ise(&x, f, &true_l_curve)).sum::<f64>() / k,
                n_converged: ok.len(),
                n_failed: fits.len() - ok.len(),
            })
        })
        .collect()
}
