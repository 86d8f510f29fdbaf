//! Rate-generating Lyapunov functions for fields affine in the gradient,
//! the perturbed forward-Euler dissipation bound, and the closed-form
//! expectation curves, together with the gradient-descent instantiations.
//!
//! The accelerated Lyapunov functions are deliberately not routed through
//! this generic path: their dissipation needs the `y_k` coupling beyond plain
//! forward Euler, and lives in [`crate::lyapunov`].

use crate::error::{Error, Result};
use crate::harness::RateBound;
use crate::lyapunov::GdLyapunovKind;
use crate::problems::Problem;
use crate::Vector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Field `g(t, z, p) = g1(t, z) + g2(t, z) p`, affine in the gradient slot.
pub struct AffineField {
    pub dim: usize,
    pub g1: Box<dyn Fn(f64, &Vector) -> Vector + Send + Sync>,
    pub g2: Box<dyn Fn(f64, &Vector) -> f64 + Send + Sync>,
    /// `sup |g2|`, used by the decaying-step rule.
    pub g2_bar: f64,
}

impl AffineField {
    pub fn g(&self, t: f64, z: &Vector, p: &Vector) -> Vector {
        (self.g1)(t, z) + p * (self.g2)(t, z)
    }
}

/// A rate-generating Lyapunov function `E(t, z)` with dissipation constants
/// `r_E`, `a_E(t)` and discrete smoothness constant `L_E(t_{k+1})`.
pub struct RateLyapunov {
    pub value: Box<dyn Fn(f64, &Vector) -> f64 + Send + Sync>,
    pub grad: Box<dyn Fn(f64, &Vector) -> Vector + Send + Sync>,
    pub time_deriv: Box<dyn Fn(f64, &Vector) -> f64 + Send + Sync>,
    pub r_e: f64,
    pub a_e: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub l_e: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// Gradient descent as an affine field: `g(t, z, p) = -p`.
pub fn gd_field(problem: &Problem) -> AffineField {
    let dim = problem.dim();
    AffineField {
        dim,
        g1: Box::new(move |_t, _z| Vector::zeros(dim)),
        g2: Box::new(|_t, _z| -1.0),
        g2_bar: 1.0,
    }
}

/// The gradient-descent Lyapunov functions as rate-generating instances:
/// `E^sc` with `(r, a, L_E) = (mu, 1, L + mu)` and
/// `E^c` with `(r, a(t), L_E(t')) = (0, t, L t' + 1)`.
pub fn gd_rate_lyapunov(problem: &Problem, kind: GdLyapunovKind) -> RateLyapunov {
    let p_val = problem.clone();
    let p_grad = problem.clone();
    let lipschitz = problem.lipschitz();
    match kind {
        GdLyapunovKind::StronglyConvex => {
            let mu = problem.mu();
            assert!(mu > 0.0, "E^sc requires mu > 0");
            RateLyapunov {
                value: Box::new(move |_t, z| {
                    p_val.f_gap(z) + 0.5 * mu * (z - p_val.minimizer()).norm_squared()
                }),
                grad: Box::new(move |_t, z| {
                    p_grad.gradient(z) + (z - p_grad.minimizer()) * mu
                }),
                time_deriv: Box::new(|_t, _z| 0.0),
                r_e: mu,
                a_e: Box::new(|_t| 1.0),
                l_e: Box::new(move |_t_next| lipschitz + mu),
            }
        }
        GdLyapunovKind::Convex => RateLyapunov {
            value: Box::new(move |t, z| {
                t * p_val.f_gap(z) + 0.5 * (z - p_val.minimizer()).norm_squared()
            }),
            grad: Box::new(move |t, z| p_grad.gradient(z) * t + (z - p_grad.minimizer())),
            time_deriv: {
                let p = problem.clone();
                Box::new(move |_t, z| p.f_gap(z))
            },
            r_e: 0.0,
            a_e: Box::new(|t| t),
            l_e: Box::new(move |t_next| lipschitz * t_next + 1.0),
        },
    }
}

/// Worst slack of the rate-generating condition
/// `dE/dt + <grad E, g> <= -r_E E - a_E |g|^2` over the samples; a sample
/// with a negative Lyapunov value fails outright. Certification passes iff
/// the result is `>= -1e-9`.
pub fn check_rate_lyapunov(
    field: &AffineField,
    lyap: &RateLyapunov,
    problem: &Problem,
    samples: &[(f64, Vector)],
) -> f64 {
    let mut worst = f64::INFINITY;
    for (t, z) in samples {
        let e = (lyap.value)(*t, z);
        if e < 0.0 {
            worst = worst.min(e);
            continue;
        }
        let g = field.g(*t, z, &problem.gradient(z));
        let lhs = (lyap.time_deriv)(*t, z) + (lyap.grad)(*t, z).dot(&g);
        let rhs = -lyap.r_e * e - (lyap.a_e)(*t) * g.norm_squared();
        worst = worst.min(rhs - lhs);
    }
    worst
}

/// Both sides of the perturbed forward-Euler dissipation bound for one step.
#[derive(Debug, Clone, Copy)]
pub struct StepBound {
    /// `E(t_{k+1}, z_{k+1}) - E(t_k, z_k)`
    pub lhs: f64,
    /// `-h r_E E(t_k, z_k) + h beta`
    pub rhs: f64,
    pub beta: f64,
    pub margin: f64,
}

/// Evaluate the dissipation bound along the perturbed Euler step
/// `z_{k+1} = z_k + h g(t_k, z_k, grad f(z_k) + e_k)`, with
/// `beta = <grad E(t_{k+1}, z_k), g2 e> + L_E h <g(grad f) + g2 e / 2, g2 e>`.
///
/// The Lyapunov gradient is taken at the advanced clock `t_{k+1}`; for a
/// time-independent `E` this is the plain dissipation-lemma residual, and for
/// `E^c` it reproduces the `t_{k+1}`-weighted residual of the perturbed
/// gradient-descent bound, keeping the margin nonnegative for every noise
/// realization.
pub fn abstract_step_bound(
    field: &AffineField,
    lyap: &RateLyapunov,
    problem: &Problem,
    t_k: f64,
    z_k: &Vector,
    h_k: f64,
    e_k: &Vector,
) -> Result<StepBound> {
    let t_next = t_k + h_k;
    let l_e = (lyap.l_e)(t_next);
    let cap = 2.0 * (lyap.a_e)(t_k) / l_e;
    if h_k > cap * (1.0 + 1e-12) {
        return Err(Error::CflViolation { h: h_k, cap });
    }
    let grad_f = problem.gradient(z_k);
    let g_clean = field.g(t_k, z_k, &grad_f);
    let g2 = (field.g2)(t_k, z_k);
    let g2_e = e_k * g2;
    let z_next = z_k + field.g(t_k, z_k, &(&grad_f + e_k)) * h_k;
    let e_curr = (lyap.value)(t_k, z_k);
    let e_next = (lyap.value)(t_next, &z_next);
    let beta = (lyap.grad)(t_next, z_k).dot(&g2_e)
        + l_e * h_k * (&g_clean + &g2_e * 0.5).dot(&g2_e);
    let lhs = e_next - e_curr;
    let rhs = -h_k * lyap.r_e * e_curr + h_k * beta;
    Ok(StepBound {
        lhs,
        rhs,
        beta,
        margin: rhs - lhs,
    })
}

/// Which closed-form expectation bound to build.
#[derive(Debug, Clone, Copy)]
pub enum ExpectationCase {
    /// `r_E > 0`, `h_k = 2/(r_E (k + alpha^{-1} E_0^{-1}))`:
    /// bound is `1/(alpha (k + alpha^{-1} E_0^{-1}))`.
    RatePositive {
        r_e: f64,
        l_e: f64,
        g2_bar: f64,
        sigma2: f64,
        e0: f64,
    },
    /// `r_E = 0` with `a_1, a_2, b_1 > 0`, `h_k = c/k^alpha`, `alpha in [2/3, 1)`.
    RateZeroCase1 {
        a1: f64,
        a2: f64,
        b1: f64,
        c: f64,
        alpha: f64,
        sigma2: f64,
        e0: f64,
    },
    /// `r_E = 0` with `a_3, b_2 > 0`, `h_k = c/k^alpha`, `alpha in [3/4, 1)`.
    RateZeroCase2 {
        a3: f64,
        b2: f64,
        c: f64,
        alpha: f64,
        sigma2: f64,
        e0: f64,
    },
}

/// Closed-form expectation bound `k -> bound(k)`, implementing the displayed
/// piecewise formulas including the log-factor branches at `alpha = 2/3` and
/// `alpha = 3/4`. Zero-rate bounds are infinite at `k = 1` (their
/// denominators vanish) and finite for `k >= 2`.
pub fn abstract_expectation_curve(case: ExpectationCase) -> Result<RateBound> {
    match case {
        ExpectationCase::RatePositive {
            r_e,
            l_e,
            g2_bar,
            sigma2,
            e0,
        } => {
            if !(r_e > 0.0 && l_e > 0.0 && g2_bar > 0.0 && sigma2 > 0.0 && e0 > 0.0) {
                return Err(Error::InvalidParameter(
                    "RatePositive needs all parameters > 0".into(),
                ));
            }
            let alpha = r_e * r_e / (2.0 * l_e * g2_bar * g2_bar * sigma2);
            Ok(RateBound::new(
                "abstract_rate_positive",
                "decaying-step expectation bound, r_E > 0",
                move |k| 1.0 / (alpha * (k as f64 + 1.0 / (alpha * e0))),
            ))
        }
        ExpectationCase::RateZeroCase1 {
            a1,
            a2,
            b1,
            c,
            alpha,
            sigma2,
            e0,
        } => {
            if !(a1 > 0.0 && a2 > 0.0 && b1 > 0.0 && c > 0.0) {
                return Err(Error::InvalidParameter(
                    "RateZeroCase1 needs a1, a2, b1, c > 0".into(),
                ));
            }
            if !(2.0 / 3.0..1.0).contains(&alpha) {
                return Err(Error::InvalidParameter(
                    "RateZeroCase1 needs alpha in [2/3, 1)".into(),
                ));
            }
            let at_knee = alpha == 2.0 / 3.0;
            Ok(RateBound::new(
                "abstract_rate_zero_case1",
                "decaying-step expectation bound, r_E = 0, linear-in-t error",
                move |k| {
                    let kf = k as f64;
                    if k == 0 {
                        return f64::INFINITY;
                    }
                    if at_knee {
                        let num = e0 / (3.0 * c)
                            + (2.0 * a1 * c / 3.0 + 0.5 * a2 * c * c * (1.0 + kf.ln())) * sigma2;
                        num / (b1 * (kf.powf(1.0 / 3.0) - 1.0))
                    } else {
                        let num = (1.0 - alpha) / c * e0
                            + (a1 * c * (1.0 - alpha) * alpha / (2.0 * alpha - 1.0)
                                + a2 * c * c * (3.0 * alpha - 1.0) / (2.0 * (3.0 * alpha - 2.0)))
                                * sigma2;
                        num / (b1 * (kf.powf(1.0 - alpha) - 1.0))
                    }
                },
            ))
        }
        ExpectationCase::RateZeroCase2 {
            a3,
            b2,
            c,
            alpha,
            sigma2,
            e0,
        } => {
            if !(a3 > 0.0 && b2 > 0.0 && c > 0.0) {
                return Err(Error::InvalidParameter(
                    "RateZeroCase2 needs a3, b2, c > 0".into(),
                ));
            }
            if !(0.75..1.0).contains(&alpha) {
                return Err(Error::InvalidParameter(
                    "RateZeroCase2 needs alpha in [3/4, 1)".into(),
                ));
            }
            let at_knee = alpha == 0.75;
            Ok(RateBound::new(
                "abstract_rate_zero_case2",
                "decaying-step expectation bound, r_E = 0, quadratic-in-t error",
                move |k| {
                    let kf = k as f64;
                    if k == 0 {
                        return f64::INFINITY;
                    }
                    if at_knee {
                        let num = e0 / (16.0 * c * c)
                            + 0.5 * a3 * c * c * sigma2 * (1.0 + kf.ln());
                        let den = kf.powf(0.25) - 1.0;
                        num / (b2 * den * den)
                    } else {
                        let num = (1.0 - alpha) * (1.0 - alpha) / (c * c) * e0
                            + a3 * c * c * (4.0 * alpha - 2.0) * sigma2
                                / (2.0 * (4.0 * alpha - 3.0));
                        let den = kf.powf(1.0 - alpha) - 1.0;
                        num / (b2 * den * den)
                    }
                },
            ))
        }
    }
}

/// Scheduled-SGD bound for strongly convex gradient descent: the positive-rate
/// curve with `(r_E, L_E, g2bar) = (mu, L + mu, 1)`, which evaluates to
/// `2 (C_f + 1) sigma^2 / (mu k + 2 (C_f + 1) sigma^2 / E_0)`.
pub fn gd_sc_expectation_curve(problem: &Problem, sigma2: f64, e0: f64) -> Result<RateBound> {
    abstract_expectation_curve(ExpectationCase::RatePositive {
        r_e: problem.mu(),
        l_e: problem.lipschitz() + problem.mu(),
        g2_bar: 1.0,
        sigma2,
        e0,
    })
    .map(|b| b.relabel("gd_sc_scheduled", "scheduled SGD bound, strongly convex"))
}

/// Scheduled-SGD bound for convex gradient descent via the Case-1 curve with
/// the identification `(a1, a2, b1) = (L (h_1 + 1)/2, L/2, 1)`, `h_1 = c`.
pub fn gd_convex_expectation_curve(
    problem: &Problem,
    c: f64,
    alpha: f64,
    sigma2: f64,
    e0: f64,
) -> Result<RateBound> {
    let lipschitz = problem.lipschitz();
    abstract_expectation_curve(ExpectationCase::RateZeroCase1 {
        a1: lipschitz * (c + 1.0) / 2.0,
        a2: lipschitz / 2.0,
        b1: 1.0,
        c,
        alpha,
        sigma2,
        e0,
    })
    .map(|b| b.relabel("gd_c_scheduled", "scheduled SGD bound, convex"))
}

/// Deterministic box sampler for certification: `count` points uniform in the
/// cube of the given radius around the problem minimizer, paired with times
/// uniform in `[t_lo, t_hi]`.
pub fn sample_states(
    problem: &Problem,
    radius: f64,
    t_lo: f64,
    t_hi: f64,
    count: usize,
    seed: u64,
) -> Vec<(f64, Vector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = problem.minimizer();
    (0..count)
        .map(|_| {
            let t = if t_hi > t_lo {
                rng.random_range(t_lo..t_hi)
            } else {
                t_lo
            };
            let z = Vector::from_iterator(
                problem.dim(),
                (0..problem.dim()).map(|i| center[i] + rng.random_range(-radius..radius)),
            );
            (t, z)
        })
        .collect()
}
