//! Test objectives with exact analytic metadata.
//!
//! Every [`Problem`] carries its strong-convexity modulus `mu`, smoothness
//! constant `lipschitz`, minimizer and minimal value, so Lyapunov functions
//! and rate bounds are computable without estimating `f*`. `lipschitz` may be
//! a conservative upper bound (logsumexp); step-size caps use it, so the
//! conservatism is safe.

use crate::error::{Error, Result};
use crate::{Matrix, Vector};
use nalgebra::{Cholesky, SymmetricEigen};

const PRESOLVE_GRAD_TOL: f64 = 1e-12;
const PRESOLVE_MAX_ITERS: usize = 200;

/// Objective family together with its defining parameters.
#[derive(Debug, Clone)]
pub enum ProblemKind {
    /// `f(x) = 1/2 sum_i lambda_i (x_i - shift_i)^2`
    Quadratic { eigenvalues: Vector, shift: Vector },
    /// `f(x) = 1/2 |A x - b|^2`
    LeastSquares { a: Matrix, b: Vector },
    /// `f(x) = log sum_i exp(a_i . x + b_i) + ridge/2 |x|^2`
    LogSumExp {
        rows: Matrix,
        offsets: Vector,
        ridge: f64,
    },
    /// `f(x) = sum_i huber_delta(x_i)` (smoothed absolute value, C^1)
    HuberizedAbs { delta: f64, dim: usize },
}

impl ProblemKind {
    fn name(&self) -> &'static str {
        match self {
            ProblemKind::Quadratic { .. } => "quadratic",
            ProblemKind::LeastSquares { .. } => "least_squares",
            ProblemKind::LogSumExp { .. } => "logsumexp",
            ProblemKind::HuberizedAbs { .. } => "huberized_abs",
        }
    }
}

/// A smooth convex objective with exact curvature and minimizer metadata.
#[derive(Debug, Clone)]
pub struct Problem {
    kind: ProblemKind,
    dim: usize,
    mu: f64,
    lipschitz: f64,
    minimizer: Vector,
    min_value: f64,
}

impl Problem {
    /// `f(x) = 1/2 sum_i lambda_i (x_i - shift_i)^2` with `mu = min lambda`,
    /// `L = max lambda`, minimizer `shift`, `f* = 0`.
    pub fn quadratic(eigenvalues: &[f64], shift: &[f64]) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidParameter(
                "quadratic needs at least one eigenvalue".into(),
            ));
        }
        if eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
            return Err(Error::InvalidParameter(
                "quadratic eigenvalues must be positive and finite".into(),
            ));
        }
        if shift.len() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                got: shift.len(),
            });
        }
        let mu = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let lipschitz = eigenvalues.iter().cloned().fold(0.0, f64::max);
        Ok(Problem {
            dim: eigenvalues.len(),
            mu,
            lipschitz,
            minimizer: Vector::from_column_slice(shift),
            min_value: 0.0,
            kind: ProblemKind::Quadratic {
                eigenvalues: Vector::from_column_slice(eigenvalues),
                shift: Vector::from_column_slice(shift),
            },
        })
    }

    /// `f(x) = 1/2 |A x - b|^2`. Requires `A^T A` nonsingular so the
    /// minimizer is unique and computable by a normal-equations solve.
    pub fn least_squares(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidParameter("least_squares needs a nonempty matrix".into()));
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let gram = a.transpose() * &a;
        let eig = SymmetricEigen::new(gram.clone());
        let mu = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
        let lipschitz = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let chol = Cholesky::new(gram.clone()).ok_or_else(|| {
            Error::InvalidParameter("least_squares: A^T A is singular".into())
        })?;
        let mut x = chol.solve(&(a.transpose() * &b));
        // one Newton polish step; exact for a quadratic up to rounding
        let grad = a.transpose() * (&a * &x - &b);
        x -= chol.solve(&grad);
        let r = &a * &x - &b;
        let min_value = 0.5 * r.norm_squared();
        Ok(Problem {
            dim: a.ncols(),
            mu,
            lipschitz,
            minimizer: x,
            min_value,
            kind: ProblemKind::LeastSquares { a, b },
        })
    }

    /// `f(x) = log sum_i exp(a_i . x + b_i) + ridge/2 |x|^2` with `mu = ridge`
    /// and `L = sigma_max(A)^2 + ridge` (a valid upper bound). The minimizer
    /// is located at construction time by a damped Newton pre-solve driven to
    /// gradient norm `<= 1e-12`.
    pub fn logsumexp(rows: Matrix, offsets: Vector, ridge: f64) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidParameter("logsumexp needs at least one row".into()));
        }
        if offsets.len() != rows.nrows() {
            return Err(Error::DimensionMismatch {
                expected: rows.nrows(),
                got: offsets.len(),
            });
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidParameter("logsumexp ridge must be >= 0".into()));
        }
        let gram = rows.transpose() * &rows;
        let sigma_max_sq = SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        let lipschitz = sigma_max_sq + ridge;
        let kind = ProblemKind::LogSumExp {
            rows,
            offsets,
            ridge,
        };
        let dim = match &kind {
            ProblemKind::LogSumExp { rows, .. } => rows.ncols(),
            _ => unreachable!(),
        };
        let minimizer = presolve_newton(&kind, dim)?;
        let min_value = eval_value(&kind, &minimizer);
        Ok(Problem {
            dim,
            mu: ridge,
            lipschitz,
            minimizer,
            min_value,
            kind,
        })
    }

    /// Coordinate-wise huberized absolute value: quadratic of curvature
    /// `1/delta` inside `[-delta, delta]`, linear outside. Convex, `L = 1/delta`,
    /// `mu = 0`, minimized at the origin with `f* = 0`.
    pub fn huberized_abs(dim: usize, delta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("huberized_abs needs dim >= 1".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter("huberized_abs delta must be > 0".into()));
        }
        Ok(Problem {
            dim,
            mu: 0.0,
            lipschitz: 1.0 / delta,
            minimizer: Vector::zeros(dim),
            min_value: 0.0,
            kind: ProblemKind::HuberizedAbs { delta, dim },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Strong-convexity modulus; zero for merely convex objectives.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Condition number `C_f = L / mu`; only defined when `mu > 0`.
    pub fn cond(&self) -> f64 {
        assert!(self.mu > 0.0, "condition number requires mu > 0");
        self.lipschitz / self.mu
    }

    pub fn minimizer(&self) -> &Vector {
        &self.minimizer
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        eval_value(&self.kind, x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        eval_gradient(&self.kind, x)
    }

    /// `f(x) - f*`.
    pub fn f_gap(&self, x: &Vector) -> f64 {
        self.value(x) - self.min_value
    }

    /// Hessian: exact for quadratics, forward differences of the gradient
    /// otherwise (step `1e-6` relative), symmetrized.
    pub fn hessian(&self, x: &Vector) -> Matrix {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        match &self.kind {
            ProblemKind::Quadratic { eigenvalues, .. } => {
                Matrix::from_diagonal(eigenvalues)
            }
            _ => {
                let n = self.dim;
                let g0 = self.gradient(x);
                let mut h = Matrix::zeros(n, n);
                let mut xp = x.clone();
                for j in 0..n {
                    let step = 1e-6 * (1.0 + x[j].abs());
                    xp[j] = x[j] + step;
                    let gj = self.gradient(&xp);
                    xp[j] = x[j];
                    for i in 0..n {
                        h[(i, j)] = (gj[i] - g0[i]) / step;
                    }
                }
                // symmetrize
                let ht = h.transpose();
                (h + ht) * 0.5
            }
        }
    }
}

fn eval_value(kind: &ProblemKind, x: &Vector) -> f64 {
    match kind {
        ProblemKind::Quadratic { eigenvalues, shift } => {
            let mut s = 0.0;
            for i in 0..x.len() {
                let d = x[i] - shift[i];
                s += eigenvalues[i] * d * d;
            }
            0.5 * s
        }
        ProblemKind::LeastSquares { a, b } => {
            let r = a * x - b;
            0.5 * r.norm_squared()
        }
        ProblemKind::LogSumExp {
            rows,
            offsets,
            ridge,
        } => {
            let z = rows * x + offsets;
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|&zi| (zi - m).exp()).sum();
            m + s.ln() + 0.5 * ridge * x.norm_squared()
        }
        ProblemKind::HuberizedAbs { delta, .. } => x
            .iter()
            .map(|&u| {
                if u.abs() <= *delta {
                    u * u / (2.0 * delta)
                } else {
                    u.abs() - delta / 2.0
                }
            })
            .sum(),
    }
}

fn eval_gradient(kind: &ProblemKind, x: &Vector) -> Vector {
    match kind {
        ProblemKind::Quadratic { eigenvalues, shift } => {
            let mut g = Vector::zeros(x.len());
            for i in 0..x.len() {
                g[i] = eigenvalues[i] * (x[i] - shift[i]);
            }
            g
        }
        ProblemKind::LeastSquares { a, b } => a.transpose() * (a * x - b),
        ProblemKind::LogSumExp {
            rows,
            offsets,
            ridge,
        } => {
            let p = softmax(&(rows * x + offsets));
            rows.transpose() * p + x * *ridge
        }
        ProblemKind::HuberizedAbs { delta, .. } => {
            Vector::from_iterator(
                x.len(),
                x.iter().map(|&u| {
                    if u.abs() <= *delta {
                        u / delta
                    } else {
                        u.signum()
                    }
                }),
            )
        }
    }
}

fn softmax(z: &Vector) -> Vector {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = Vector::from_iterator(z.len(), z.iter().map(|&zi| (zi - m).exp()));
    let s: f64 = p.iter().sum();
    p /= s;
    p
}

/// Analytic logsumexp Hessian, used only by the construction-time pre-solve.
fn logsumexp_hessian(rows: &Matrix, offsets: &Vector, ridge: f64, x: &Vector) -> Matrix {
    let p = softmax(&(rows * x + offsets));
    let weighted = Matrix::from_fn(rows.nrows(), rows.ncols(), |i, j| p[i] * rows[(i, j)]);
    let mean_row = rows.transpose() * &p;
    let mut h = rows.transpose() * weighted - &mean_row * mean_row.transpose();
    for i in 0..h.nrows() {
        h[(i, i)] += ridge;
    }
    h
}

/// Damped Newton with Armijo backtracking, run to |grad| <= 1e-12.
fn presolve_newton(kind: &ProblemKind, dim: usize) -> Result<Vector> {
    let (rows, offsets, ridge) = match kind {
        ProblemKind::LogSumExp {
            rows,
            offsets,
            ridge,
        } => (rows, offsets, *ridge),
        _ => unreachable!("pre-solve is only used for logsumexp"),
    };
    let mut x = Vector::zeros(dim);
    let mut fx = eval_value(kind, &x);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..PRESOLVE_MAX_ITERS {
        let g = eval_gradient(kind, &x);
        grad_norm = g.norm();
        if grad_norm <= PRESOLVE_GRAD_TOL {
            return Ok(x);
        }
        let h = logsumexp_hessian(rows, offsets, ridge, &x);
        let dir = match Cholesky::new(h) {
            Some(chol) => -chol.solve(&g),
            None => -&g,
        };
        let slope = g.dot(&dir);
        if !(slope < 0.0) {
            // not a descent direction; fall back to steepest descent
            let mut step = 1.0 / (1.0 + grad_norm);
            let dir = -&g;
            loop {
                let cand = &x + &dir * step;
                let fc = eval_value(kind, &cand);
                if fc < fx || step < 1e-18 {
                    x = cand;
                    fx = fc;
                    break;
                }
                step *= 0.5;
            }
            continue;
        }
        let mut step = 1.0;
        loop {
            let cand = &x + &dir * step;
            let fc = eval_value(kind, &cand);
            if fc <= fx + 1e-4 * step * slope || step < 1e-18 {
                x = cand;
                fx = fc;
                break;
            }
            step *= 0.5;
        }
    }
    let g = eval_gradient(kind, &x);
    if g.norm() <= PRESOLVE_GRAD_TOL {
        Ok(x)
    } else {
        Err(Error::PreSolveFailed {
            tol: PRESOLVE_GRAD_TOL,
            iters: PRESOLVE_MAX_ITERS,
            achieved: grad_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vector {
        Vector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-radius..radius)))
    }

    #[test]
    fn identity_quadratic() {
        let p = Problem::quadratic(&[1.0], &[0.0]).unwrap();
        assert_eq!(p.mu(), 1.0);
        assert_eq!(p.lipschitz(), 1.0);
        assert_eq!(p.min_value(), 0.0);
        let x = Vector::from_column_slice(&[3.0]);
        assert_relative_eq!(p.value(&x), 4.5);
        assert_relative_eq!(p.gradient(&x)[0], 3.0);
    }

    #[test]
    fn quadratic_condition_number() {
        let p = Problem::quadratic(&[1.0, 4.0], &[0.0, 0.0]).unwrap();
        assert_eq!(p.mu(), 1.0);
        assert_eq!(p.lipschitz(), 4.0);
        assert_eq!(p.cond(), 4.0);
    }

    #[test]
    fn quadratic_stationary_at_minimizer() {
        let p = Problem::quadratic(&[0.01, 1.0], &[2.0, -3.0]).unwrap();
        let g = p.gradient(p.minimizer());
        assert!(g.norm() <= 1e-10);
        assert!((p.value(p.minimizer()) - p.min_value()).abs() <= 1e-12);
    }

    #[test]
    fn quadratic_rejects_bad_input() {
        assert!(Problem::quadratic(&[], &[]).is_err());
        assert!(Problem::quadratic(&[1.0, -2.0], &[0.0, 0.0]).is_err());
        assert!(Problem::quadratic(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn logsumexp_constant_row_reduces_to_ridge() {
        let p = Problem::logsumexp(Matrix::zeros(1, 1), Vector::zeros(1), 1.0).unwrap();
        let x = Vector::from_column_slice(&[2.0]);
        assert_relative_eq!(p.value(&x), 2.0, epsilon = 1e-12);
        assert!(p.minimizer().norm() <= 1e-10);
        assert!(p.min_value().abs() <= 1e-12);
        assert_eq!(p.mu(), 1.0);
        assert_relative_eq!(p.lipschitz(), 1.0);
    }

    #[test]
    fn logsumexp_symmetric_pair() {
        let rows = Matrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let p = Problem::logsumexp(rows, Vector::zeros(2), 0.0).unwrap();
        assert!(p.minimizer().norm() <= 1e-10);
        assert_relative_eq!(p.min_value(), 2.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn logsumexp_presolve_reaches_tolerance() {
        let rows = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
        let p = Problem::logsumexp(rows, Vector::zeros(3), 0.1).unwrap();
        assert!(p.gradient(p.minimizer()).norm() <= 1e-10);
    }

    #[test]
    fn least_squares_minimizer_is_stationary() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, -1.0]);
        let b = Vector::from_column_slice(&[1.0, 2.0, 0.5]);
        let p = Problem::least_squares(a, b).unwrap();
        assert!(p.gradient(p.minimizer()).norm() <= 1e-10);
        assert!(p.mu() > 0.0);
        assert!(p.mu() <= p.lipschitz());
    }

    #[test]
    fn huberized_abs_basics() {
        let p = Problem::huberized_abs(2, 0.5).unwrap();
        assert_eq!(p.mu(), 0.0);
        assert_eq!(p.lipschitz(), 2.0);
        let x = Vector::from_column_slice(&[0.25, 3.0]);
        // 0.25^2/(2*0.5) + (3 - 0.25)
        assert_relative_eq!(p.value(&x), 0.0625 + 2.75);
        let g = p.gradient(&x);
        assert_relative_eq!(g[0], 0.5);
        assert_relative_eq!(g[1], 1.0);
    }

    fn all_test_problems() -> Vec<Problem> {
        let a = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, -1.0]);
        let b = Vector::from_column_slice(&[1.0, 2.0, 0.5]);
        let rows = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
        vec![
            Problem::quadratic(&[1.0, 4.0], &[0.5, -1.0]).unwrap(),
            Problem::least_squares(a, b).unwrap(),
            Problem::logsumexp(rows, Vector::zeros(3), 0.1).unwrap(),
            Problem::huberized_abs(2, 0.5).unwrap(),
        ]
    }

    #[test]
    fn smoothness_and_strong_convexity_hold_on_sampled_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in all_test_problems() {
            for _ in 0..1000 {
                let x = sample_point(&mut rng, p.dim(), 5.0);
                let y = sample_point(&mut rng, p.dim(), 5.0);
                let gx = p.gradient(&x);
                let diff = &y - &x;
                let lin = p.value(&x) + gx.dot(&diff);
                let smooth_slack =
                    lin + 0.5 * p.lipschitz() * diff.norm_squared() - p.value(&y);
                assert!(
                    smooth_slack >= -1e-9,
                    "{}: smoothness violated, slack {smooth_slack}",
                    p.kind_name()
                );
                if p.mu() > 0.0 {
                    let sc_slack =
                        p.value(&y) - (lin + 0.5 * p.mu() * diff.norm_squared());
                    assert!(
                        sc_slack >= -1e-9,
                        "{}: strong convexity violated, slack {sc_slack}",
                        p.kind_name()
                    );
                }
            }
        }
    }

    #[test]
    fn central_differences_match_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in all_test_problems() {
            for _ in 0..100 {
                let x = sample_point(&mut rng, p.dim(), 3.0);
                let g = p.gradient(&x);
                for j in 0..p.dim() {
                    let step = 1e-6 * (1.0 + x[j].abs());
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += step;
                    xm[j] -= step;
                    let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * step);
                    let denom = 1.0 + g[j].abs();
                    assert!(
                        ((fd - g[j]) / denom).abs() <= 1e-6,
                        "{}: grad component {j} mismatch fd={fd} g={}",
                        p.kind_name(),
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_matches_quadratic_and_fd_agrees_for_logsumexp() {
        let q = Problem::quadratic(&[1.0, 4.0], &[0.0, 0.0]).unwrap();
        let h = q.hessian(&Vector::zeros(2));
        assert_eq!(h[(0, 0)], 1.0);
        assert_eq!(h[(1, 1)], 4.0);

        let rows = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
        let p = Problem::logsumexp(rows.clone(), Vector::zeros(3), 0.1).unwrap();
        let x = Vector::from_column_slice(&[0.3, -0.2]);
        let fd = p.hessian(&x);
        let exact = logsumexp_hessian(&rows, &Vector::zeros(3), 0.1, &x);
        assert!((fd - exact).norm() <= 1e-5);
    }
}
