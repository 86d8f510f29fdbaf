//! Continuous-time systems underlying the accelerated iterations, a fixed-step
//! classical Runge-Kutta integrator, and the continuous/discrete consistency
//! verifiers.
//!
//! First-order systems (state `(x, v)`):
//!
//! - strongly convex: `x' = sqrt(mu)(v - x) - grad f(x)/sqrt(L)`,
//!   `v' = sqrt(mu)(x - v) - sqrt(C_f) grad f(x)/sqrt(L)`;
//! - convex (`t > 0`): `x' = (2/t)(v - x) - grad f(x)/sqrt(L)`,
//!   `v' = -(t/2) grad f(x)`.
//!
//! Second-order equivalents (state `(x, x')`) carry the Hessian-damping term
//! `D^2 f(x) x' / sqrt(L)`.

use crate::error::{Error, Result};
use crate::lyapunov;
use crate::optimizers;
use crate::problems::Problem;
use crate::schedules;
use crate::Vector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeSystem {
    FirstOrderSc,
    FirstOrderC,
    SecondOrderSc,
    SecondOrderC,
}

impl OdeSystem {
    pub fn is_convex_clocked(self) -> bool {
        matches!(self, OdeSystem::FirstOrderC | OdeSystem::SecondOrderC)
    }

    pub fn is_second_order(self) -> bool {
        matches!(self, OdeSystem::SecondOrderSc | OdeSystem::SecondOrderC)
    }
}

/// Sampled trajectory. For first-order systems `vs` holds `v`; for
/// second-order systems it holds the velocity `x'`.
#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub system: OdeSystem,
    pub times: Vec<f64>,
    pub xs: Vec<Vector>,
    pub vs: Vec<Vector>,
}

impl OdeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn rhs(system: OdeSystem, problem: &Problem, t: f64, x: &Vector, v: &Vector) -> (Vector, Vector) {
    let root_l = problem.lipschitz().sqrt();
    let g = problem.gradient(x);
    match system {
        OdeSystem::FirstOrderSc => {
            let root_mu = problem.mu().sqrt();
            let cond_sqrt = (problem.lipschitz() / problem.mu()).sqrt();
            let dx = (v - x) * root_mu - &g * (1.0 / root_l);
            let dv = (x - v) * root_mu - &g * (cond_sqrt / root_l);
            (dx, dv)
        }
        OdeSystem::FirstOrderC => {
            let dx = (v - x) * (2.0 / t) - &g * (1.0 / root_l);
            let dv = -&g * (t / 2.0);
            (dx, dv)
        }
        OdeSystem::SecondOrderSc => {
            // v is the velocity x'
            let root_mu = problem.mu().sqrt();
            let hess_v = problem.hessian(x) * v;
            let du = -v * (2.0 * root_mu) - &g - (hess_v + &g * root_mu) * (1.0 / root_l);
            (v.clone(), du)
        }
        OdeSystem::SecondOrderC => {
            let hess_v = problem.hessian(x) * v;
            let du = -v * (3.0 / t) - &g - (hess_v + &g * (1.0 / t)) * (1.0 / root_l);
            (v.clone(), du)
        }
    }
}

/// Classical fixed-step RK4 from `t0` to `t0 + n dt` where `n = round((t_end - t0)/dt)`.
///
/// For the convex systems `t0 > 0` is required (the `2/t` coefficient is
/// singular at zero); runs matching the discrete convention start at `t0 = 2 dt`
/// by default in the CLI.
pub fn integrate(
    system: OdeSystem,
    problem: &Problem,
    x0: &Vector,
    v0: &Vector,
    t0: f64,
    t_end: f64,
    dt: f64,
) -> Result<OdeTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    if t_end <= t0 {
        return Err(Error::InvalidParameter("t_end must exceed t0".into()));
    }
    if system.is_convex_clocked() && !(t0 > 0.0) {
        return Err(Error::InvalidParameter(
            "convex systems need t0 > 0 (singular 2/t coefficient)".into(),
        ));
    }
    if x0.len() != problem.dim() || v0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x0.len(),
        });
    }
    let n = ((t_end - t0) / dt).round().max(1.0) as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let mut vs = Vec::with_capacity(n + 1);
    let mut x = x0.clone();
    let mut v = v0.clone();
    let mut t = t0;
    times.push(t);
    xs.push(x.clone());
    vs.push(v.clone());
    for step in 0..n {
        let (k1x, k1v) = rhs(system, problem, t, &x, &v);
        let (k2x, k2v) = rhs(
            system,
            problem,
            t + 0.5 * dt,
            &(&x + &k1x * (0.5 * dt)),
            &(&v + &k1v * (0.5 * dt)),
        );
        let (k3x, k3v) = rhs(
            system,
            problem,
            t + 0.5 * dt,
            &(&x + &k2x * (0.5 * dt)),
            &(&v + &k2v * (0.5 * dt)),
        );
        let (k4x, k4v) = rhs(
            system,
            problem,
            t + dt,
            &(&x + &k3x * dt),
            &(&v + &k3v * dt),
        );
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        t = t0 + (step as f64 + 1.0) * dt;
        if x.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Divergence { step });
        }
        times.push(t);
        xs.push(x.clone());
        vs.push(v.clone());
    }
    Ok(OdeTrajectory {
        system,
        times,
        xs,
        vs,
    })
}

/// Recover the first-order companion variable `v` from `(x, x')`.
pub fn reconstruct_v(system: OdeSystem, problem: &Problem, t: f64, x: &Vector, xdot: &Vector) -> Vector {
    let root_l = problem.lipschitz().sqrt();
    let g = problem.gradient(x);
    match system {
        OdeSystem::SecondOrderSc | OdeSystem::FirstOrderSc => {
            let root_mu = problem.mu().sqrt();
            x + (xdot + &g * (1.0 / root_l)) * (1.0 / root_mu)
        }
        OdeSystem::SecondOrderC | OdeSystem::FirstOrderC => {
            x + (xdot + &g * (1.0 / root_l)) * (t / 2.0)
        }
    }
}

/// Lyapunov value along a trajectory sample: `E^{ac,sc}` for the strongly
/// convex systems, `E^{ac,c}(t, .; 0)` for the convex ones.
pub fn lyapunov_value(traj: &OdeTrajectory, problem: &Problem, i: usize) -> f64 {
    let t = traj.times[i];
    let v = if traj.system.is_second_order() {
        reconstruct_v(traj.system, problem, t, &traj.xs[i], &traj.vs[i])
    } else {
        traj.vs[i].clone()
    };
    match traj.system {
        OdeSystem::FirstOrderSc | OdeSystem::SecondOrderSc => {
            lyapunov::e_sc(problem, &traj.xs[i], &v)
        }
        OdeSystem::FirstOrderC | OdeSystem::SecondOrderC => {
            lyapunov::e_ac_c(problem, t, &traj.xs[i], &v, 0.0)
        }
    }
}

/// Largest ratio `E^{ac,sc}(x(t), v(t)) / (exp(-sqrt(mu) (t - t0)) E_0)` over
/// the samples of a strongly convex first-order trajectory; `<= 1` up to
/// integration error. Returns 0 for a stationary start (`E_0 = 0`).
pub fn verify_continuous_sc_decay(traj: &OdeTrajectory, problem: &Problem) -> f64 {
    assert!(matches!(traj.system, OdeSystem::FirstOrderSc));
    let e0 = lyapunov::e_sc(problem, &traj.xs[0], &traj.vs[0]);
    if e0 == 0.0 {
        return 0.0;
    }
    let root_mu = problem.mu().sqrt();
    let t0 = traj.times[0];
    let mut worst = 0.0f64;
    for i in 0..traj.len() {
        let e = lyapunov::e_sc(problem, &traj.xs[i], &traj.vs[i]);
        let bound = (-root_mu * (traj.times[i] - t0)).exp() * e0;
        worst = worst.max(e / bound);
    }
    worst
}

/// Largest ratio `(f(x(t)) - f*) t^2 / (2 |v_0 - x*|^2)` over the samples of a
/// convex first-order trajectory; `<= 1` up to integration error and the
/// `t0^2 (f(x_0) - f*)` initialization term.
pub fn verify_continuous_c_rate(traj: &OdeTrajectory, problem: &Problem) -> f64 {
    assert!(matches!(traj.system, OdeSystem::FirstOrderC));
    let v0_gap = 2.0 * (&traj.vs[0] - problem.minimizer()).norm_squared();
    if v0_gap == 0.0 && problem.f_gap(&traj.xs[0]) == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for i in 0..traj.len() {
        let t = traj.times[i];
        worst = worst.max(problem.f_gap(&traj.xs[i]) * t * t / v0_gap);
    }
    worst
}

/// Integrate the first-order system and its second-order equivalent from
/// consistent initial conditions; return the largest `|x_first - x_second|`
/// over the shared sample times.
pub fn verify_equivalence_first_second(
    problem: &Problem,
    first: OdeSystem,
    x0: &Vector,
    v0: &Vector,
    t0: f64,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    let (second, xdot0) = match first {
        OdeSystem::FirstOrderSc => {
            let root_mu = problem.mu().sqrt();
            let xdot0 = (v0 - x0) * root_mu
                - problem.gradient(x0) * (1.0 / problem.lipschitz().sqrt());
            (OdeSystem::SecondOrderSc, xdot0)
        }
        OdeSystem::FirstOrderC => {
            let xdot0 = (v0 - x0) * (2.0 / t0)
                - problem.gradient(x0) * (1.0 / problem.lipschitz().sqrt());
            (OdeSystem::SecondOrderC, xdot0)
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "expected a first-order system, got {other:?}"
            )))
        }
    };
    let a = integrate(first, problem, x0, v0, t0, t_end, dt)?;
    let b = integrate(second, problem, x0, &xdot0, t0, t_end, dt)?;
    let mut worst = 0.0f64;
    for i in 0..a.len().min(b.len()) {
        worst = worst.max((&a.xs[i] - &b.xs[i]).norm());
    }
    Ok(worst)
}

/// Endpoint self-convergence of the RK4 integrator: runs at `dt`, `dt/2`,
/// `dt/4` and returns `(e1/e2, log2(e1/e2))` where `e1`, `e2` are successive
/// endpoint differences. The ratio sits near 16 for a fourth-order scheme.
pub fn rk4_self_convergence(
    system: OdeSystem,
    problem: &Problem,
    x0: &Vector,
    v0: &Vector,
    t0: f64,
    t_end: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    let a = integrate(system, problem, x0, v0, t0, t_end, dt)?;
    let b = integrate(system, problem, x0, v0, t0, t_end, dt / 2.0)?;
    let c = integrate(system, problem, x0, v0, t0, t_end, dt / 4.0)?;
    let e1 = (a.xs.last().unwrap() - b.xs.last().unwrap()).norm();
    let e2 = (b.xs.last().unwrap() - c.xs.last().unwrap()).norm();
    if e2 == 0.0 {
        return Err(Error::InvalidParameter(
            "self-convergence differences hit the rounding floor; use a larger dt".into(),
        ));
    }
    let ratio = e1 / e2;
    Ok((ratio, ratio.log2()))
}

/// Which discrete family a forward-Euler consistency check exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EulerFamily {
    StronglyConvex,
    Convex,
}

/// Observed order of the constant-step deterministic optimizer as a
/// discretization of its ODE: endpoint errors against an RK4 reference are
/// fitted across `h`, `h/2`, `h/4`; the estimate sits near 1.
///
/// For the convex family the continuous clock starts at `t0 = 2 h_bar`
/// (matching the discrete `t_k` convention at the coarsest step), and the
/// discrete runs at refined steps use the same shifted clock.
pub fn euler_consistency_order(
    family: EulerFamily,
    problem: &Problem,
    x0: &Vector,
    t_end: f64,
    h_bar: f64,
) -> Result<f64> {
    let mu = problem.mu();
    let lipschitz = problem.lipschitz();
    let mut errors = Vec::new();
    match family {
        EulerFamily::StronglyConvex => {
            let reference = integrate(
                OdeSystem::FirstOrderSc,
                problem,
                x0,
                x0,
                0.0,
                t_end,
                h_bar / 16.0,
            )?;
            let x_ref = reference.xs.last().unwrap();
            for level in 0..3 {
                let h = h_bar / 2f64.powi(level);
                let n = (t_end / h).round() as usize;
                let mut x = x0.clone();
                let mut v = x0.clone();
                for _ in 0..n {
                    let y = optimizers::sc_coupling(&x, &v, h, mu);
                    let g = problem.gradient(&y);
                    let (xn, vn) = optimizers::sc_threevar_apply(&x, &v, &g, h, mu, lipschitz);
                    x = xn;
                    v = vn;
                }
                errors.push((x - x_ref).norm());
            }
        }
        EulerFamily::Convex => {
            let t0 = 2.0 * h_bar;
            let reference = integrate(
                OdeSystem::FirstOrderC,
                problem,
                x0,
                x0,
                t0,
                t0 + t_end,
                h_bar / 16.0,
            )?;
            let x_ref = reference.xs.last().unwrap();
            for level in 0..3 {
                let h = h_bar / 2f64.powi(level);
                let n = (t_end / h).round() as usize;
                let mut x = x0.clone();
                let mut v = x0.clone();
                for j in 0..n {
                    let t = t0 + j as f64 * h;
                    let y = optimizers::c_coupling(&x, &v, h, t);
                    let g = problem.gradient(&y);
                    let (xn, vn) = optimizers::c_threevar_apply(&y, &v, &g, h, t, lipschitz);
                    x = xn;
                    v = vn;
                }
                errors.push((x - x_ref).norm());
            }
        }
    }
    let mut orders = Vec::new();
    for pair in errors.windows(2) {
        if pair[0] > 1e-12 && pair[1] > 1e-12 {
            orders.push((pair[0] / pair[1]).log2());
        }
    }
    if orders.is_empty() {
        return Err(Error::InvalidParameter(
            "all endpoint errors are at the rounding floor; enlarge h_bar".into(),
        ));
    }
    Ok(orders.iter().sum::<f64>() / orders.len() as f64)
}

/// `w_sc`-consistency helper for tests: the discrete SC weight divided by `h`
/// tends to `sqrt(mu)` as `h -> 0`.
pub fn sc_weight_rate(h: f64, mu: f64) -> f64 {
    schedules::w_sc(h, mu) / h
}
