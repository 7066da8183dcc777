//! Dense dual active-set solver (Goldfarb–Idnani) for strictly convex QPs
//!
//! ```text
//! minimize   0.5 x'Gx + a'x
//! subject to c_j'x >= d_j   for every row j of C
//! ```
//!
//! The method starts from the unconstrained minimizer and adds violated
//! constraints one at a time, so it needs no feasible starting point and
//! reports the offending row when the constraints cannot all hold.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub active: Vec<usize>,
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    /// Row `j` cannot be satisfied together with the currently active rows.
    Infeasible(usize),
    NotPositiveDefinite,
    IterationLimit,
}

/// Squared sine of the angle between `c` and the active rows (in the metric of `G`)
/// below which `c` counts as spanned by them.
const DEPENDENCE_TOL: f64 = 1e-12;

pub fn solve(
    g: &DMatrix<f64>,
    a: &DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Result<QpSolution, QpError> {
    let n = g.nrows();
    let m = c.nrows();
    let chol = g.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let l = chol.l();
    let mut x = -chol.solve(a);
    // constraint normals in the metric of G: c_hat = L^-1 c, so G^-1 c = L^-T c_hat
    let c_hat = l
        .solve_lower_triangular(&c.transpose())
        .ok_or(QpError::NotPositiveDefinite)?;

    let norms: Vec<f64> = (0..m).map(|j| c.row(j).norm()).collect();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_iter = 10 * (m + n) + 100;
    let mut iterations = 0;

    loop {
        // most violated constraint, measured in distance units
        let x_scale = 1.0 + x.amax();
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..m {
            if active.contains(&j) || (norms[j] == 0.0 && d[j] <= 0.0) {
                continue;
            }
            let s = c.row(j).transpose().dot(&x) - d[j];
            let tol = 1e-11 * (norms[j] * x_scale + d[j].abs());
            if s < -tol {
                let scaled = if norms[j] > 0.0 { s / norms[j] } else { s };
                if worst.is_none_or(|(_, w)| scaled < w) {
                    worst = Some((j, scaled));
                }
            }
        }
        let Some((p, _)) = worst else {
            return Ok(QpSolution {
                x,
                active,
                multipliers: u,
            });
        };
        let cp = c.row(p).transpose();
        let cp_hat = c_hat.column(p).into_owned();
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            // split c_hat_p into its part in the span of the active normals and the rest
            let (z_hat, r) = if active.is_empty() {
                (cp_hat.clone(), DVector::zeros(0))
            } else {
                let mut n_hat = DMatrix::zeros(n, active.len());
                for (k, &j) in active.iter().enumerate() {
                    n_hat.set_column(k, &c_hat.column(j));
                }
                let qr = n_hat.qr();
                let q1 = qr.q();
                let coef = q1.tr_mul(&cp_hat);
                let r = qr
                    .r()
                    .solve_upper_triangular(&coef)
                    .ok_or(QpError::NotPositiveDefinite)?;
                (&cp_hat - &q1 * coef, r)
            };
            let z = l
                .tr_solve_lower_triangular(&z_hat)
                .ok_or(QpError::NotPositiveDefinite)?;

            // dual step length: first active multiplier to reach zero
            let mut t1 = f64::INFINITY;
            let mut drop_k = None;
            for k in 0..r.len() {
                if r[k] > 0.0 {
                    let t = u[k] / r[k];
                    if t < t1 {
                        t1 = t;
                        drop_k = Some(k);
                    }
                }
            }
            // primal step length: distance to make constraint p active
            let zc = z_hat.norm_squared();
            let scale = cp_hat.norm_squared();
            let t2 = if zc <= DEPENDENCE_TOL * scale.max(f64::MIN_POSITIVE) {
                f64::INFINITY
            } else {
                let s = cp.dot(&x) - d[p];
                (-s / zc).max(0.0)
            };
            let t = t1.min(t2);
            if t.is_infinite() {
                return Err(QpError::Infeasible(p));
            }
            if t2.is_infinite() {
                // dual step only
                for k in 0..u.len() {
                    u[k] -= t * r[k];
                }
                u_p += t;
                let k = drop_k.expect("finite dual step has a blocking row");
                active.remove(k);
                u.remove(k);
                continue;
            }
            x += &z * t;
            for k in 0..u.len() {
                u[k] -= t * r[k];
            }
            u_p += t;
            if t2 <= t1 {
                active.push(p);
                u.push(u_p);
                break;
            }
            let k = drop_k.expect("partial step has a blocking row");
            active.remove(k);
            u.remove(k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    #[test]
    fn unconstrained_minimizer_when_nothing_binds() {
        let g = DMatrix::identity(2, 2);
        let a = dvector![-1.0, -2.0];
        let c = dmatrix![1.0, 0.0];
        let d = dvector![-10.0];
        let sol = solve(&g, &a, &c, &d).unwrap();
        assert!((sol.x - dvector![1.0, 2.0]).norm() < 1e-14);
        assert!(sol.active.is_empty());
    }

    #[test]
    fn projection_onto_halfspace() {
        // project (2, 2) onto x + y <= 1  (i.e. -x - y >= -1)
        let g = DMatrix::identity(2, 2);
        let a = dvector![-2.0, -2.0];
        let c = dmatrix![-1.0, -1.0];
        let d = dvector![-1.0];
        let sol = solve(&g, &a, &c, &d).unwrap();
        assert!((sol.x - dvector![0.5, 0.5]).norm() < 1e-14);
        assert_eq!(sol.active, vec![0]);
        assert!((sol.multipliers[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn box_and_coupling_constraints() {
        // min (x-3)^2 + (y-3)^2 s.t. 0<=x<=1, 0<=y<=2, x + y <= 2.5
        let g = DMatrix::identity(2, 2) * 2.0;
        let a = dvector![-6.0, -6.0];
        let c = dmatrix![
            1.0, 0.0;
            -1.0, 0.0;
            0.0, 1.0;
            0.0, -1.0;
            -1.0, -1.0
        ];
        let d = dvector![0.0, -1.0, 0.0, -2.0, -2.5];
        let sol = solve(&g, &a, &c, &d).unwrap();
        assert!((&sol.x - dvector![1.0, 1.5]).norm() < 1e-12, "{}", sol.x);
    }

    #[test]
    fn detects_infeasibility() {
        // x >= 1 and x <= 0
        let g = DMatrix::identity(1, 1);
        let a = dvector![0.0];
        let c = dmatrix![1.0; -1.0];
        let d = dvector![1.0, 0.0];
        assert!(matches!(solve(&g, &a, &c, &d), Err(QpError::Infeasible(_))));
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let g = dmatrix![1.0, 0.0; 0.0, -1.0];
        let r = solve(
            &g,
            &dvector![0.0, 0.0],
            &DMatrix::zeros(0, 2),
            &DVector::zeros(0),
        );
        assert_eq!(r, Err(QpError::NotPositiveDefinite));
    }

    #[test]
    fn opposing_near_dependent_rows_pin_a_subspace() {
        // a + b t >= 0 on 20 points of [0, 1] and a + b s <= 0 on 20 points of [0.6, 1]
        // leave only a + b t = 0 on [0.6, 1], hence a = b = 0
        let mut rows = Vec::new();
        for k in 0..20 {
            let t = k as f64 / 19.0;
            rows.extend_from_slice(&[1.0, t, 0.0]);
        }
        for k in 0..20 {
            let s = 0.6 + 0.4 * k as f64 / 19.0;
            rows.extend_from_slice(&[-1.0, -s, 0.0]);
        }
        let c = DMatrix::from_row_slice(40, 3, &rows);
        let d = DVector::zeros(40);
        let g = DMatrix::identity(3, 3);
        let a = dvector![-1.0, 1.0, -1.0];
        let sol = solve(&g, &a, &c, &d).unwrap();
        assert!(
            sol.x[0].abs() < 1e-12 && sol.x[1].abs() < 1e-12,
            "{}",
            sol.x
        );
        assert!((sol.x[2] - 1.0).abs() < 1e-14);
    }
}
