//! Cramér–Rao lower bound for the two-covariate Pogit setting and a Monte-Carlo
//! estimate of its Fisher information.
//!
//! Setting: `x_l ~ N(mu_l, s_l^2)` and `x_p ~ N(0, s_p^2)` independent, with
//! `lambda = exp(theta_l x_l)` and `p = expit(theta_p x_p)`, no intercepts.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PogitError, Result};
use crate::link::expit;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoCovariateSetting {
    pub theta_lambda: f64,
    pub theta_p: f64,
    pub mu_lambda: f64,
    pub sigma_lambda: f64,
    pub sigma_p: f64,
    pub n: usize,
}

impl TwoCovariateSetting {
    pub fn new(theta_lambda: f64, theta_p: f64, n: usize) -> Self {
        TwoCovariateSetting {
            theta_lambda,
            theta_p,
            mu_lambda: 0.0,
            sigma_lambda: 1.0,
            sigma_p: 1.0,
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.theta_lambda,
            self.theta_p,
            self.mu_lambda,
            self.sigma_lambda,
            self.sigma_p,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.sigma_lambda <= 0.0 || self.sigma_p <= 0.0 || self.n == 0 {
            return Err(PogitError::Config(format!(
                "invalid two-covariate setting {self:?}"
            )));
        }
        Ok(())
    }

    /// Lognormal mean `E[lambda]`.
    pub fn expected_lambda(&self) -> f64 {
        let (t, m, s) = (self.theta_lambda, self.mu_lambda, self.sigma_lambda);
        (m * t + 0.5 * s * s * t * t).exp()
    }

    /// `E[p]`, exactly one half because `x_p` is symmetric about zero.
    pub fn expected_p(&self) -> f64 {
        0.5
    }

    /// Draw one `(x_l, x_p)` pair.
    pub fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let zl: f64 = rng.sample(StandardNormal);
        let zp: f64 = rng.sample(StandardNormal);
        (self.mu_lambda + self.sigma_lambda * zl, self.sigma_p * zp)
    }
}

/// Lower bound on the covariance of `(theta_l, theta_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundMatrix {
    pub matrix: [[f64; 2]; 2],
}

impl BoundMatrix {
    pub fn diagonal(&self) -> [f64; 2] {
        [self.matrix[0][0], self.matrix[1][1]]
    }

    /// Square roots of the diagonal.
    pub fn sd(&self) -> [f64; 2] {
        let d = self.diagonal();
        [d[0].sqrt(), d[1].sqrt()]
    }
}

pub fn crlb(setting: &TwoCovariateSetting) -> BoundMatrix {
    let s = setting;
    let scale = s.n as f64 * s.expected_lambda();
    let shift = s.mu_lambda + s.sigma_lambda * s.sigma_lambda * s.theta_lambda;
    let info_l = s.expected_p() * (shift * shift + s.sigma_lambda * s.sigma_lambda);
    BoundMatrix {
        matrix: [
            [1.0 / (scale * info_l), 0.0],
            [0.0, 2.0 * s.theta_p * s.theta_p / scale],
        ],
    }
}

/// Per-sample negative Hessian entries `(ll, lp, pp)` of the log-likelihood.
pub fn sample_information(setting: &TwoCovariateSetting, xl: f64, xp: f64, y: f64) -> [f64; 3] {
    let lambda = (setting.theta_lambda * xl).exp();
    let s = expit(setting.theta_p * xp);
    let w = s * (1.0 - s);
    [
        lambda * s * xl * xl,
        lambda * w * xl * xp,
        w * (y + lambda * (1.0 - 2.0 * s)) * xp * xp,
    ]
}

pub const MC_CHUNK: usize = 8192;

/// Running first and second moments of the three information entries.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    sum: [f64; 3],
    cross: [[f64; 3]; 3],
}

impl Moments {
    fn push(&mut self, h: [f64; 3]) {
        self.count += 1.0;
        for i in 0..3 {
            self.sum[i] += h[i];
            for j in 0..3 {
                self.cross[i][j] += h[i] * h[j];
            }
        }
    }

    fn merge(mut self, other: &Moments) -> Moments {
        self.count += other.count;
        for i in 0..3 {
            self.sum[i] += other.sum[i];
            for j in 0..3 {
                self.cross[i][j] += other.cross[i][j];
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    /// Per-observation Fisher information.
    pub information: [[f64; 2]; 2],
    pub information_se: [[f64; 2]; 2],
    /// `information^-1 / n`, comparable with [`crlb`].
    pub inverse: [[f64; 2]; 2],
    pub inverse_se: [[f64; 2]; 2],
    pub n_samples: usize,
}

fn chunk_moments(setting: &TwoCovariateSetting, seed: u64, chunk: usize, len: usize) -> Moments {
    let mut rng = rng::stream(seed, chunk as u64);
    let mut m = Moments::default();
    for _ in 0..len {
        let (xl, xp) = setting.draw_covariates(&mut rng);
        let mu = (setting.theta_lambda * xl).exp() * expit(setting.theta_p * xp);
        let y = if mu > 0.0 {
            Poisson::new(mu)
                .expect("positive finite mean")
                .sample(&mut rng)
        } else {
            0.0
        };
        m.push(sample_information(setting, xl, xp, y));
    }
    m
}

/// Monte-Carlo Fisher information from `n_samples` draws of `(x_l, x_p, y)`.
///
/// Chunks use independent streams and are reduced in index order, so the
/// result does not depend on the thread count.
pub fn fisher_information_mc(
    setting: &TwoCovariateSetting,
    n_samples: usize,
    seed: u64,
) -> Result<FisherEstimate> {
    setting.validate()?;
    if n_samples == 0 {
        return Err(PogitError::Config("n_samples must be at least 1".into()));
    }
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            chunk_moments(setting, seed, c, len)
        })
        .collect();
    let m = parts.iter().fold(Moments::default(), |acc, p| acc.merge(p));

    let n = m.count;
    let mean: Vec<f64> = m.sum.iter().map(|s| s / n).collect();
    // covariance of the sample mean
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let c = (m.cross[i][j] - n * mean[i] * mean[j]) / (n - 1.0).max(1.0);
            cov[i][j] = c / n;
        }
    }
    let info = Matrix2::new(mean[0], mean[1], mean[1], mean[2]);
    let inv = info.try_inverse().ok_or(PogitError::NotPositiveDefinite)?;
    // d(F^-1) = -F^-1 dF F^-1 for the three symmetric basis directions
    let basis = [
        Matrix2::new(1.0, 0.0, 0.0, 0.0),
        Matrix2::new(0.0, 1.0, 1.0, 0.0),
        Matrix2::new(0.0, 0.0, 0.0, 1.0),
    ];
    let grads: Vec<Matrix2<f64>> = basis.iter().map(|e| -(inv * e * inv)).collect();
    let mut inverse_se = [[0.0; 2]; 2];
    for (r, row) in inverse_se.iter_mut().enumerate() {
        for (c, out) in row.iter_mut().enumerate() {
            let mut var = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    var += grads[i][(r, c)] * cov[i][j] * grads[j][(r, c)];
                }
            }
            *out = var.max(0.0).sqrt() / setting.n as f64;
        }
    }
    let se = |k: usize| cov[k][k].max(0.0).sqrt();
    let scale = 1.0 / setting.n as f64;
    Ok(FisherEstimate {
        information: [[mean[0], mean[1]], [mean[1], mean[2]]],
        information_se: [[se(0), se(1)], [se(1), se(2)]],
        inverse: [
            [inv[(0, 0)] * scale, inv[(0, 1)] * scale],
            [inv[(1, 0)] * scale, inv[(1, 1)] * scale],
        ],
        inverse_se,
        n_samples,
    })
}

/// `e^u u^2 / (1 + e^u)^3`, written as `u^2 s (1 - s)^2` with `s = expit(u)`.
pub fn c_objective(u: f64) -> f64 {
    let s = expit(u);
    let t = expit(-u);
    u * u * s * t * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantC {
    pub value: f64,
    pub argmax: f64,
}

pub const C_GRID_POINTS: usize = 1_000_000;
pub const C_GRID_HALF_WIDTH: f64 = 50.0;

/// Maximize [`c_objective`] by a dense grid on `[-50, 50]` and golden-section refinement.
pub fn constant_c_bound() -> ConstantC {
    let lo = -C_GRID_HALF_WIDTH;
    let step = 2.0 * C_GRID_HALF_WIDTH / (C_GRID_POINTS - 1) as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..C_GRID_POINTS {
        let v = c_objective(lo + step * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut a, mut b) = (
        lo + step * (best_i as f64 - 1.0),
        lo + step * (best_i as f64 + 1.0),
    );
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    while (b - a).abs() > 1e-12 {
        if c_objective(c) > c_objective(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    let u = 0.5 * (a + b);
    let v = c_objective(u);
    if v >= best {
        ConstantC {
            value: v,
            argmax: u,
        }
    } else {
        ConstantC {
            value: best,
            argmax: lo + step * best_i as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_bound() {
        let b = crlb(&TwoCovariateSetting::new(1.0, 1.0, 50));
        assert!((b.matrix[0][0] - 0.012131).abs() < 1e-6);
        assert!((b.matrix[1][1] - 0.024261).abs() < 1e-6);
        assert_eq!(b.matrix[0][1], 0.0);
        assert_eq!(b.matrix[1][0], 0.0);
    }

    #[test]
    fn bound_scaling_and_zero_entry() {
        let s = TwoCovariateSetting::new(0.7, 0.0, 40);
        let b = crlb(&s);
        assert_eq!(b.matrix[1][1], 0.0);
        let b2 = crlb(&TwoCovariateSetting { n: 80, ..s });
        assert!((b2.matrix[0][0] * 2.0 - b.matrix[0][0]).abs() < 1e-15);
    }

    #[test]
    fn simplified_form_matches() {
        for (tl, tp) in [(1.0, 1.0), (-2.0, 0.5), (0.3, -4.0)] {
            let s = TwoCovariateSetting::new(tl, tp, 25);
            let b = crlb(&s);
            let n_el = 25.0 * s.expected_lambda();
            assert!((b.matrix[0][0] - 2.0 / (n_el * (tl * tl + 1.0))).abs() < 1e-14);
            assert!((b.matrix[1][1] - 2.0 * tp * tp / n_el).abs() < 1e-14);
        }
    }

    #[test]
    fn mc_is_thread_independent_and_seeded() {
        let s = TwoCovariateSetting::new(1.0, 2.0, 50);
        let a = fisher_information_mc(&s, 20_000, 11).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| fisher_information_mc(&s, 20_000, 11).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, fisher_information_mc(&s, 20_000, 12).unwrap());
    }

    #[test]
    fn mc_rate_entry_matches_closed_form() {
        let s = TwoCovariateSetting::new(1.0, 2.0, 50);
        let est = fisher_information_mc(&s, 200_000, 5).unwrap();
        let exact = s.expected_p() * s.expected_lambda() * 2.0;
        assert!((est.information[0][0] - exact).abs() < 3.0 * est.information_se[0][0]);
        assert!(est.information[0][1].abs() < 3.0 * est.information_se[0][1]);
    }

    #[test]
    fn constant_c_is_at_most_half() {
        let c = constant_c_bound();
        assert!(c.value > 0.0 && c.value <= 0.5);
        for u in [-10.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 10.0] {
            assert!(c_objective(u) <= c.value);
        }
    }
}
