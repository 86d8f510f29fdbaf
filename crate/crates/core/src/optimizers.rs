//! Discrete iterations: gradient descent, classical Nesterov (constant step),
//! and the accelerated stochastic methods in three-variable and eliminated
//! two-variable form.
//!
//! The three-variable systems are normative; eliminated-form coefficients are
//! derived from the elimination identity so the two forms agree exactly when
//! fed the same noise stream:
//!
//! - strongly convex: `beta_k = w_{k+1} (sqrt(C_f) - 1)`,
//!   `gamma_k = w_{k+1} (1/(h_k sqrt(mu)) - sqrt(C_f))` with
//!   `w_{k+1} = h_{k+1} sqrt(mu) / (1 + h_{k+1} sqrt(mu))`;
//! - convex: `beta_k = (h_{k+1}/t_{k+1}) (t_k sqrt(L) - 2)`,
//!   `gamma_k = (t_k/t_{k+1}) (h_{k+1}/h_k) (1 - sqrt(L) h_k)`.
//!
//! For a constant step `h = 1/sqrt(L)` these reduce to the classical
//! coefficients `beta = (sqrt(C_f)-1)/(sqrt(C_f)+1)` resp. `beta_k = k/(k+3)`,
//! `gamma_k = 0`.

use crate::error::{Error, Result};
use crate::lyapunov;
use crate::oracle::GradientOracle;
use crate::problems::Problem;
use crate::schedules::{self, Schedule};
use crate::Vector;
use serde::{Deserialize, Serialize};

/// Which update rule a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    PerturbedGd,
    NesterovScConstant,
    NesterovCConstant,
    AsgdScThreeVar,
    AsgdScEliminated,
    AsgdCThreeVar,
    AsgdCEliminated,
}

impl OptimizerKind {
    pub fn is_strongly_convex_family(self) -> bool {
        matches!(
            self,
            OptimizerKind::NesterovScConstant
                | OptimizerKind::AsgdScThreeVar
                | OptimizerKind::AsgdScEliminated
        )
    }

    pub fn is_convex_family(self) -> bool {
        matches!(
            self,
            OptimizerKind::NesterovCConstant
                | OptimizerKind::AsgdCThreeVar
                | OptimizerKind::AsgdCEliminated
        )
    }

    pub fn is_gd(self) -> bool {
        matches!(self, OptimizerKind::Gd | OptimizerKind::PerturbedGd)
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::PerturbedGd => "perturbed_gd",
            OptimizerKind::NesterovScConstant => "nesterov_sc_constant",
            OptimizerKind::NesterovCConstant => "nesterov_c_constant",
            OptimizerKind::AsgdScThreeVar => "asgd_sc_three_var",
            OptimizerKind::AsgdScEliminated => "asgd_sc_eliminated",
            OptimizerKind::AsgdCThreeVar => "asgd_c_three_var",
            OptimizerKind::AsgdCEliminated => "asgd_c_eliminated",
        }
    }
}

/// One optimizer state snapshot.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x: Vector,
    pub v: Vector,
    pub y: Vector,
    pub k: usize,
    pub t_k: f64,
    pub h_k: f64,
    pub last_noise: Vector,
}

/// One recorded step of a run.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub k: usize,
    /// Step size used leaving this state (`h_k`).
    pub h: f64,
    /// Discrete time. Accelerated convex runs store `t_k = sum_{i<=k+1} h_i`;
    /// the other families store the cumulative clock `sum_{i<k} h_i`.
    pub t: f64,
    pub x: Vector,
    pub v: Vector,
    pub y: Vector,
    /// Noise realized in the step leaving this state; zeros on the last record.
    pub e: Vector,
    pub f_gap: f64,
    /// `E^SC` (accelerated families) or `E^sc` (gradient descent), when `mu > 0`.
    pub lyap_sc: Option<f64>,
    /// `E^{ac,c}` (accelerated families) or `E^c` (gradient descent).
    pub lyap_c: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TraceMeta {
    pub problem: String,
    pub optimizer: OptimizerKind,
    pub schedule: String,
    pub seed: u64,
    /// Index of the first scheduled step after a warm-start phase.
    pub switch_step: Option<usize>,
}

/// Full record of a run: one record per visited state, `k` increasing from 0.
#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Materialize the state snapshot at record index `i`.
    pub fn state_at(&self, i: usize) -> IterateState {
        let r = &self.records[i];
        IterateState {
            x: r.x.clone(),
            v: r.v.clone(),
            y: r.y.clone(),
            k: r.k,
            t_k: r.t,
            h_k: r.h,
            last_noise: r.e.clone(),
        }
    }

    pub fn last_state(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least one record")
    }

    /// Realized noise sequence, one vector per executed step.
    pub fn noise_sequence(&self) -> Vec<Vector> {
        self.records[..self.records.len().saturating_sub(1)]
            .iter()
            .map(|r| r.e.clone())
            .collect()
    }
}

fn check_finite(xs: &[&Vector], step: usize) -> Result<()> {
    for v in xs {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    Ok(())
}

fn check_cap(h: f64, cap: f64, step: usize) -> Result<()> {
    if h > cap * (1.0 + 1e-12) {
        return Err(Error::StepCapExceeded { h, cap, step });
    }
    Ok(())
}

/// Coupling point of the strongly convex system: `y = (1-w) x + w v`.
pub fn sc_coupling(x: &Vector, v: &Vector, h: f64, mu: f64) -> Vector {
    let w = schedules::w_sc(h, mu);
    x * (1.0 - w) + v * w
}

/// One strongly convex three-variable step given the sampled gradient at `y`.
pub fn sc_threevar_apply(
    x: &Vector,
    v: &Vector,
    g_hat: &Vector,
    h: f64,
    mu: f64,
    lipschitz: f64,
) -> (Vector, Vector) {
    let w = schedules::w_sc(h, mu);
    let x_next = x + (v - x) * w - g_hat * (h / lipschitz.sqrt());
    let v_next = v + (x - v) * w - g_hat * (h / mu.sqrt());
    (x_next, v_next)
}

/// Coupling point of the convex system: `y = (1-w) x + w v`, `w = 2h/t`.
pub fn c_coupling(x: &Vector, v: &Vector, h: f64, t: f64) -> Vector {
    let w = 2.0 * h / t;
    x * (1.0 - w) + v * w
}

/// One convex three-variable step given the sampled gradient at `y`.
pub fn c_threevar_apply(
    y: &Vector,
    v: &Vector,
    g_hat: &Vector,
    h: f64,
    t: f64,
    lipschitz: f64,
) -> (Vector, Vector) {
    // x_{k+1} = x_k + w (v_k - x_k) - (h/sqrt(L)) g_hat = y_k - (h/sqrt(L)) g_hat
    let x_next = y - g_hat * (h / lipschitz.sqrt());
    let v_next = v - g_hat * (h * t / 2.0);
    (x_next, v_next)
}

/// Eliminated-form coefficients for the strongly convex family.
pub fn sc_eliminated_coeffs(h_k: f64, h_next: f64, mu: f64, lipschitz: f64) -> (f64, f64, f64) {
    let cond_sqrt = (lipschitz / mu).sqrt();
    let alpha = h_k * lipschitz.sqrt();
    let w_next = schedules::w_sc(h_next, mu);
    let beta = w_next * (cond_sqrt - 1.0);
    let gamma = w_next * (1.0 / (h_k * mu.sqrt()) - cond_sqrt);
    (alpha, beta, gamma)
}

/// Eliminated-form coefficients for the convex family.
pub fn c_eliminated_coeffs(
    h_k: f64,
    h_next: f64,
    t_k: f64,
    t_next: f64,
    lipschitz: f64,
) -> (f64, f64, f64) {
    let root_l = lipschitz.sqrt();
    let alpha = h_k * root_l;
    let beta = (h_next / t_next) * (t_k * root_l - 2.0);
    let gamma = (t_k / t_next) * (h_next / h_k) * (1.0 - root_l * h_k);
    (alpha, beta, gamma)
}

struct RunAccumulator<'p> {
    problem: &'p Problem,
    kind: OptimizerKind,
    records: Vec<TraceRecord>,
}

impl<'p> RunAccumulator<'p> {
    fn push(&mut self, k: usize, h: f64, t: f64, x: Vector, v: Vector, y: Vector) {
        let f_gap = self.problem.f_gap(&x);
        let (lyap_sc, lyap_c) = if self.kind.is_gd() {
            let sc = (self.problem.mu() > 0.0)
                .then(|| lyapunov::e_gd(self.problem, lyapunov::GdLyapunovKind::StronglyConvex, t, &x));
            let c = Some(lyapunov::e_gd(
                self.problem,
                lyapunov::GdLyapunovKind::Convex,
                t,
                &x,
            ));
            (sc, c)
        } else if self.kind.is_convex_family() {
            // discrete E_k^{ac,c}: multiplier 0 at k = 0, t_{k-1} afterwards
            let m = if k == 0 { 0.0 } else { self.prev_t() };
            let c = Some(lyapunov::e_ac_c(self.problem, m, &x, &v, 0.0));
            let sc = (self.problem.mu() > 0.0).then(|| lyapunov::e_sc(self.problem, &x, &v));
            (sc, c)
        } else {
            let sc = (self.problem.mu() > 0.0).then(|| lyapunov::e_sc(self.problem, &x, &v));
            (sc, None)
        };
        self.records.push(TraceRecord {
            k,
            h,
            t,
            x,
            v,
            y,
            e: Vector::zeros(self.problem.dim()),
            f_gap,
            lyap_sc,
            lyap_c,
        });
    }

    fn prev_t(&self) -> f64 {
        self.records.last().map(|r| r.t).unwrap_or(0.0)
    }

    fn set_noise(&mut self, e: Vector) {
        self.records
            .last_mut()
            .expect("noise recorded after a state")
            .e = e;
    }
}

/// Execute `steps` iterations of `kind` from `x0` (with `v0 = x0`).
///
/// With `warmstart` and an accelerated strongly convex kind, a constant-step
/// (`h = 1/sqrt(L)`) phase first runs until `E^SC <= E_crit = 2 sigma^2 /
/// sqrt(mu L)` or the worst-case step count is reached; the decaying schedule
/// then restarts at `k = 0` with `E_0^SC` re-measured at the switch point.
/// The trace then holds `warm steps + steps + 1` records and
/// `meta.switch_step` marks the switch.
pub fn run<O: GradientOracle>(
    kind: OptimizerKind,
    problem: &Problem,
    oracle: &mut O,
    schedule: &Schedule,
    x0: &Vector,
    steps: usize,
    warmstart: bool,
) -> Result<Trace> {
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x0.len(),
        });
    }
    let mut acc = RunAccumulator {
        problem,
        kind,
        records: Vec::with_capacity(steps + 1),
    };
    let mut switch_step = None;

    let mut schedule = schedule.clone();
    if warmstart && kind.is_strongly_convex_family() {
        if oracle.sigma2() <= 0.0 {
            return Err(Error::Config(
                "warm start requires sigma2 > 0 (E_crit would be zero)".into(),
            ));
        }
        let (mu, lipschitz) = (problem.mu(), problem.lipschitz());
        let h_const = 1.0 / lipschitz.sqrt();
        let e_crit = schedules::e_crit(oracle.sigma2(), mu, lipschitz);
        let mut x = x0.clone();
        let mut v = x0.clone();
        let e0 = lyapunov::e_sc(problem, &x, &v);
        let cap = schedules::warmstart_steps(e0, e_crit, mu, lipschitz);
        let mut clock = 0.0;
        let mut taken = 0;
        while lyapunov::e_sc(problem, &x, &v) > e_crit && taken < cap {
            let y = sc_coupling(&x, &v, h_const, mu);
            acc.push(taken, h_const, clock, x.clone(), v.clone(), y.clone());
            let (g_hat, e) = oracle.sample(problem, &y)?;
            acc.set_noise(e);
            let (xn, vn) = sc_threevar_apply(&x, &v, &g_hat, h_const, mu, lipschitz);
            check_finite(&[&xn, &vn], taken)?;
            x = xn;
            v = vn;
            clock += h_const;
            taken += 1;
        }
        switch_step = Some(taken);
        let e0_measured = lyapunov::e_sc(problem, &x, &v).max(f64::MIN_POSITIVE);
        schedule = schedule.with_e0(e0_measured)?;
        run_phase(kind, problem, oracle, &schedule, x, v, steps, clock, taken, &mut acc)?;
        return Ok(Trace {
            records: acc.records,
            meta: TraceMeta {
                problem: problem.kind_name().to_string(),
                optimizer: kind,
                schedule: format!("{:?}", schedule.kind()),
                seed: 0,
                switch_step,
            },
        });
    }

    run_phase(
        kind,
        problem,
        oracle,
        &schedule,
        x0.clone(),
        x0.clone(),
        steps,
        0.0,
        0,
        &mut acc,
    )?;
    Ok(Trace {
        records: acc.records,
        meta: TraceMeta {
            problem: problem.kind_name().to_string(),
            optimizer: kind,
            schedule: format!("{:?}", schedule.kind()),
            seed: 0,
            switch_step,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn run_phase<O: GradientOracle>(
    kind: OptimizerKind,
    problem: &Problem,
    oracle: &mut O,
    schedule: &Schedule,
    x0: Vector,
    v0: Vector,
    steps: usize,
    clock0: f64,
    k_offset: usize,
    acc: &mut RunAccumulator,
) -> Result<()> {
    let mu = problem.mu();
    let lipschitz = problem.lipschitz();
    let root_l = lipschitz.sqrt();
    let cap = schedule.step_cap();

    match kind {
        OptimizerKind::Gd | OptimizerKind::PerturbedGd => {
            let mut x = x0;
            let mut clock = clock0;
            for k in 0..steps {
                let h = schedule.h(k);
                check_cap(h, cap, k)?;
                acc.push(k + k_offset, h, clock, x.clone(), x.clone(), x.clone());
                let (g_hat, e) = if kind == OptimizerKind::Gd {
                    (problem.gradient(&x), Vector::zeros(problem.dim()))
                } else {
                    oracle.sample(problem, &x)?
                };
                acc.set_noise(e);
                let xn = &x - g_hat * h;
                check_finite(&[&xn], k)?;
                x = xn;
                clock += h;
            }
            let h = schedule.h(steps);
            acc.push(steps + k_offset, h, clock, x.clone(), x.clone(), x);
        }
        OptimizerKind::AsgdScThreeVar => {
            let mut x = x0;
            let mut v = v0;
            let mut clock = clock0;
            for k in 0..steps {
                let h = schedule.h(k);
                check_cap(h, cap, k)?;
                let y = sc_coupling(&x, &v, h, mu);
                acc.push(k + k_offset, h, clock, x.clone(), v.clone(), y.clone());
                let (g_hat, e) = oracle.sample(problem, &y)?;
                acc.set_noise(e);
                let (xn, vn) = sc_threevar_apply(&x, &v, &g_hat, h, mu, lipschitz);
                check_finite(&[&xn, &vn], k)?;
                x = xn;
                v = vn;
                clock += h;
            }
            let h = schedule.h(steps);
            let y = sc_coupling(&x, &v, h, mu);
            acc.push(steps + k_offset, h, clock, x, v, y);
        }
        OptimizerKind::AsgdCThreeVar => {
            let mut x = x0;
            let mut v = v0;
            // t_k = sum_{i<=k+1} h_i, tracked incrementally
            let mut t = schedule.h(0) + schedule.h(1);
            for k in 0..steps {
                let h = schedule.h(k);
                check_cap(h, cap, k)?;
                let y = c_coupling(&x, &v, h, t);
                acc.push(k + k_offset, h, t, x.clone(), v.clone(), y.clone());
                let (g_hat, e) = oracle.sample(problem, &y)?;
                acc.set_noise(e);
                let (xn, vn) = c_threevar_apply(&y, &v, &g_hat, h, t, lipschitz);
                check_finite(&[&xn, &vn], k)?;
                x = xn;
                v = vn;
                t += schedule.h(k + 2);
            }
            let h = schedule.h(steps);
            let y = c_coupling(&x, &v, h, t);
            acc.push(steps + k_offset, h, t, x, v, y);
        }
        OptimizerKind::AsgdScEliminated => {
            let mut x = x0.clone();
            let mut y = x0; // v0 = x0 implies y0 = x0
            let mut clock = clock0;
            for k in 0..steps {
                let h = schedule.h(k);
                check_cap(h, cap, k)?;
                let w = schedules::w_sc(h, mu);
                let v = &x + (&y - &x) * (1.0 / w);
                acc.push(k + k_offset, h, clock, x.clone(), v, y.clone());
                let (g_hat, e) = oracle.sample(problem, &y)?;
                acc.set_noise(e);
                let (_, beta, gamma) = sc_eliminated_coeffs(h, schedule.h(k + 1), mu, lipschitz);
                let x_next = &y - &g_hat * (h / root_l);
                let y_next = &x_next + (&x_next - &x) * beta + (&y - &x) * gamma;
                check_finite(&[&x_next, &y_next], k)?;
                x = x_next;
                y = y_next;
                clock += h;
            }
            let h = schedule.h(steps);
            let w = schedules::w_sc(h, mu);
            let v = &x + (&y - &x) * (1.0 / w);
            acc.push(steps + k_offset, h, clock, x, v, y);
        }
        OptimizerKind::AsgdCEliminated => {
            let mut x = x0.clone();
            let mut y = x0;
            let mut t = schedule.h(0) + schedule.h(1);
            for k in 0..steps {
                let h = schedule.h(k);
                check_cap(h, cap, k)?;
                let t_next = t + schedule.h(k + 2);
                let w = 2.0 * h / t;
                let v = &x + (&y - &x) * (1.0 / w);
                acc.push(k + k_offset, h, t, x.clone(), v, y.clone());
                let (g_hat, e) = oracle.sample(problem, &y)?;
                acc.set_noise(e);
                let (_, beta, gamma) =
                    c_eliminated_coeffs(h, schedule.h(k + 1), t, t_next, lipschitz);
                let x_next = &y - &g_hat * (h / root_l);
                let y_next = &x_next + (&x_next - &x) * beta + (&y - &x) * gamma;
                check_finite(&[&x_next, &y_next], k)?;
                x = x_next;
                y = y_next;
                t = t_next;
            }
            let h = schedule.h(steps);
            let w = 2.0 * h / t;
            let v = &x + (&y - &x) * (1.0 / w);
            acc.push(steps + k_offset, h, t, x, v, y);
        }
        OptimizerKind::NesterovScConstant => {
            require_constant_acc_step(schedule, lipschitz)?;
            let cond_sqrt = (lipschitz / mu).sqrt();
            let beta = (cond_sqrt - 1.0) / (cond_sqrt + 1.0);
            let mut x = x0.clone();
            let mut y = x0;
            let mut clock = clock0;
            let h = 1.0 / root_l;
            for k in 0..steps {
                let v = reconstruct_v_sc(&x, &y, h, mu);
                acc.push(k + k_offset, h, clock, x.clone(), v, y.clone());
                let (g_hat, e) = oracle.sample(problem, &y)?;
                acc.set_noise(e);
                let x_next = &y - &g_hat * (1.0 / lipschitz);
                let y_next = &x_next + (&x_next - &x) * beta;
                check_finite(&[&x_next, &y_next], k)?;
                x = x_next;
                y = y_next;
                clock += h;
            }
            let v = reconstruct_v_sc(&x, &y, h, mu);
            acc.push(steps + k_offset, h, clock, x, v, y);
        }
        OptimizerKind::NesterovCConstant => {
            require_constant_acc_step(schedule, lipschitz)?;
            let mut x = x0.clone();
            let mut y = x0;
            let h = 1.0 / root_l;
            for k in 0..steps {
                let t = h * (k as f64 + 2.0);
                let w = 2.0 / (k as f64 + 2.0);
                let v = &x + (&y - &x) * (1.0 / w);
                acc.push(k + k_offset, h, t, x.clone(), v, y.clone());
                let (g_hat, e) = oracle.sample(problem, &y)?;
                acc.set_noise(e);
                let beta = k as f64 / (k as f64 + 3.0);
                let x_next = &y - &g_hat * (1.0 / lipschitz);
                let y_next = &x_next + (&x_next - &x) * beta;
                check_finite(&[&x_next, &y_next], k)?;
                x = x_next;
                y = y_next;
            }
            let t = h * (steps as f64 + 2.0);
            let w = 2.0 / (steps as f64 + 2.0);
            let v = &x + (&y - &x) * (1.0 / w);
            acc.push(steps + k_offset, h, t, x, v, y);
        }
    }
    Ok(())
}

fn reconstruct_v_sc(x: &Vector, y: &Vector, h: f64, mu: f64) -> Vector {
    let w = schedules::w_sc(h, mu);
    x + (y - x) * (1.0 / w)
}

fn require_constant_acc_step(schedule: &Schedule, lipschitz: f64) -> Result<()> {
    let h = schedule.h(0);
    let expected = 1.0 / lipschitz.sqrt();
    if (h - expected).abs() > 1e-12 * expected || schedule.h(1) != h {
        return Err(Error::Config(format!(
            "classical Nesterov kinds require a constant schedule with h = 1/sqrt(L) = {expected}, got h = {h}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{NoiseKind, NoisyGradientOracle, ReplayOracle};
    use approx::assert_relative_eq;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::from_column_slice(&[a, b])
    }

    fn quadratic(eigs: &[f64]) -> Problem {
        Problem::quadratic(eigs, &vec![0.0; eigs.len()]).unwrap()
    }

    fn noiseless() -> NoisyGradientOracle {
        NoisyGradientOracle::new(NoiseKind::None, 0.0, 0)
    }

    #[test]
    fn sc_threevar_reaches_minimizer_in_one_step_when_cond_is_one() {
        // f(x) = x^2/2, x0 = v0 = 1, h = 1: w = 1/2, grad = 1 -> x1 = v1 = 0
        let p = quadratic(&[1.0]);
        let sched = Schedule::constant(1.0, 1.0).unwrap();
        let mut oracle = noiseless();
        let trace = run(
            OptimizerKind::AsgdScThreeVar,
            &p,
            &mut oracle,
            &sched,
            &Vector::from_column_slice(&[1.0]),
            1,
            false,
        )
        .unwrap();
        assert_eq!(trace.len(), 2);
        assert!(trace.records[1].x.norm() <= 1e-15);
        assert!(trace.records[1].v.norm() <= 1e-15);
    }

    #[test]
    fn sc_threevar_hand_evaluated_step() {
        // mu=1, L=4, x0=v0=(1,1), h=0.5: w=1/3, y0=(1,1), grad=(1,4)
        // x1 = (1,1) - 0.25*(1,4) = (0.75, 0); v1 = (1,1) - 0.5*(1,4) = (0.5,-1)
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::constant(0.5, 0.5).unwrap();
        let mut oracle = noiseless();
        let trace = run(
            OptimizerKind::AsgdScThreeVar,
            &p,
            &mut oracle,
            &sched,
            &vec2(1.0, 1.0),
            1,
            false,
        )
        .unwrap();
        let r = &trace.records[1];
        assert_relative_eq!(r.x[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(r.x[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.v[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.v[1], -1.0, epsilon = 1e-15);
        let w = schedules::w_sc(0.5, 1.0);
        assert_relative_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn c_threevar_hand_evaluated_step() {
        // f(x)=x^2/2, x0=v0=1, h=1 (L=1): t0=2, w0=1, y0=1 -> x1=0, v1=0
        let p = quadratic(&[1.0]);
        let sched = Schedule::constant(1.0, 1.0).unwrap();
        let mut oracle = noiseless();
        let trace = run(
            OptimizerKind::AsgdCThreeVar,
            &p,
            &mut oracle,
            &sched,
            &Vector::from_column_slice(&[1.0]),
            1,
            false,
        )
        .unwrap();
        let r = &trace.records[1];
        assert!(r.x.norm() <= 1e-15);
        assert!(r.v.norm() <= 1e-15);
        assert_relative_eq!(trace.records[0].t, 2.0);
    }

    #[test]
    fn gd_exact_one_step_solve() {
        let p = quadratic(&[1.0]);
        let sched = Schedule::constant(1.0, 1.0).unwrap();
        let mut oracle = noiseless();
        let trace = run(
            OptimizerKind::Gd,
            &p,
            &mut oracle,
            &sched,
            &Vector::from_column_slice(&[1.0]),
            1,
            false,
        )
        .unwrap();
        assert!(trace.records[1].x.norm() <= 1e-16);
    }

    #[test]
    fn gd_hand_evaluated_step() {
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::constant(0.25, 0.25).unwrap();
        let mut oracle = noiseless();
        let trace = run(
            OptimizerKind::Gd,
            &p,
            &mut oracle,
            &sched,
            &vec2(1.0, 1.0),
            1,
            false,
        )
        .unwrap();
        assert_relative_eq!(trace.records[1].x[0], 0.75);
        assert_relative_eq!(trace.records[1].x[1], 0.0);
    }

    #[test]
    fn gd_descent_is_monotone_with_h_one_over_l() {
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::constant(0.25, 0.25).unwrap();
        let mut oracle = noiseless();
        let trace = run(
            OptimizerKind::Gd,
            &p,
            &mut oracle,
            &sched,
            &vec2(3.0, -2.0),
            200,
            false,
        )
        .unwrap();
        for pair in trace.records.windows(2) {
            assert!(pair[1].f_gap <= pair[0].f_gap * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_steps_returns_initial_state_only() {
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::constant(0.25, 0.5).unwrap();
        let mut oracle = noiseless();
        let trace = run(
            OptimizerKind::AsgdScThreeVar,
            &p,
            &mut oracle,
            &sched,
            &vec2(1.0, 1.0),
            0,
            false,
        )
        .unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.records[0].k, 0);
    }

    #[test]
    fn forced_oversized_step_reports_divergence_not_nan() {
        let p = quadratic(&[1.0, 4.0]);
        // cap deliberately raised so the step is admitted, then diverges
        let sched = Schedule::constant(5.0, 10.0).unwrap();
        let mut oracle = noiseless();
        let err = run(
            OptimizerKind::AsgdScThreeVar,
            &p,
            &mut oracle,
            &sched,
            &vec2(1.0, 1.0),
            2000,
            false,
        )
        .unwrap_err();
        match err {
            Error::Divergence { .. } => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn oversized_constant_step_is_rejected_at_schedule_construction() {
        // the admissible cap for the accelerated kinds is 1/sqrt(L)
        let p = quadratic(&[1.0, 4.0]);
        let cap = 1.0 / p.lipschitz().sqrt();
        assert!(Schedule::constant(0.6, cap).is_err());
    }

    fn max_x_gap(a: &Trace, b: &Trace) -> f64 {
        assert_eq!(a.len(), b.len());
        a.records
            .iter()
            .zip(&b.records)
            .map(|(ra, rb)| (&ra.x - &rb.x).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn sc_threevar_matches_classical_nesterov_for_constant_step() {
        for cond in [1.0, 4.0, 100.0] {
            let p = quadratic(&[1.0, cond]);
            let h = 1.0 / p.lipschitz().sqrt();
            let sched = Schedule::constant(h, h).unwrap();
            let x0 = vec2(1.0, 1.0);
            let mut o1 = noiseless();
            let a = run(OptimizerKind::AsgdScThreeVar, &p, &mut o1, &sched, &x0, 1000, false)
                .unwrap();
            let mut o2 = noiseless();
            let b = run(
                OptimizerKind::NesterovScConstant,
                &p,
                &mut o2,
                &sched,
                &x0,
                1000,
                false,
            )
            .unwrap();
            let gap = max_x_gap(&a, &b);
            assert!(gap <= 1e-12, "C_f = {cond}: gap {gap}");
        }
    }

    #[test]
    fn c_threevar_matches_classical_convex_nesterov_for_constant_step() {
        let p = quadratic(&[1.0, 4.0]);
        let h = 0.5;
        let sched = Schedule::constant(h, h).unwrap();
        let x0 = vec2(1.0, -2.0);
        let mut o1 = noiseless();
        let a = run(OptimizerKind::AsgdCThreeVar, &p, &mut o1, &sched, &x0, 200, false).unwrap();
        let mut o2 = noiseless();
        let b = run(
            OptimizerKind::NesterovCConstant,
            &p,
            &mut o2,
            &sched,
            &x0,
            200,
            false,
        )
        .unwrap();
        let gap = max_x_gap(&a, &b);
        assert!(gap <= 1e-12, "gap {gap}");
    }

    #[test]
    fn sc_eliminated_coeffs_match_displayed_values() {
        // C_f = 4, schedule h_k = 2/(sqrt(mu)(k + 2 sqrt(C_f))), mu = 1:
        // alpha_0 = 1, beta_0 = 1/3.5, gamma_0 = 0
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::strongly_convex_decay(1.0, 4.0, 0.0, 1.0).unwrap();
        let (alpha, beta, gamma) =
            sc_eliminated_coeffs(sched.h(0), sched.h(1), p.mu(), p.lipschitz());
        assert_relative_eq!(alpha, 1.0, epsilon = 1e-14);
        assert_relative_eq!(beta, 1.0 / 3.5, epsilon = 1e-14);
        assert_relative_eq!(gamma, 0.0, epsilon = 1e-14);
        // k = 1: gamma_1 = k/(2 sqrt(C_f) + k + 3) = 1/8
        let (_, _, gamma1) = sc_eliminated_coeffs(sched.h(1), sched.h(2), p.mu(), p.lipschitz());
        assert_relative_eq!(gamma1, 1.0 / 8.0, epsilon = 1e-14);
    }

    #[test]
    fn sc_eliminated_with_cond_one_is_plain_gradient_descent_on_y() {
        // C_f = 1: beta = 0 and the x iterates coincide with GD at step 1/L
        let p = quadratic(&[2.0, 2.0]);
        let h = 1.0 / p.lipschitz().sqrt();
        let sched = Schedule::constant(h, h).unwrap();
        let x0 = vec2(1.0, -0.5);
        let mut o1 = noiseless();
        let nest = run(
            OptimizerKind::NesterovScConstant,
            &p,
            &mut o1,
            &sched,
            &x0,
            50,
            false,
        )
        .unwrap();
        let gd_sched = Schedule::constant(0.5, 0.5).unwrap(); // 1/L
        let mut o2 = noiseless();
        let gd = run(OptimizerKind::Gd, &p, &mut o2, &gd_sched, &x0, 50, false).unwrap();
        for (a, b) in nest.records.iter().zip(&gd.records) {
            assert!((&a.x - &b.x).norm() <= 1e-13);
        }
    }

    #[test]
    fn c_eliminated_constant_step_reproduces_classical_coefficients() {
        let lipschitz = 4.0;
        let h = 0.5;
        let sched = Schedule::constant(h, h).unwrap();
        for k in 0..10 {
            let (alpha, beta, gamma) = c_eliminated_coeffs(
                sched.h(k),
                sched.h(k + 1),
                sched.t(k as i64),
                sched.t(k as i64 + 1),
                lipschitz,
            );
            assert_relative_eq!(alpha, 1.0, epsilon = 1e-14);
            assert_relative_eq!(beta, k as f64 / (k as f64 + 3.0), epsilon = 1e-13);
            assert_relative_eq!(gamma, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn eliminated_form_tracks_threevar_under_shared_noise_sc() {
        let p = quadratic(&[1.0, 100.0]);
        let sched = Schedule::strongly_convex_decay(1.0, 100.0, 1.0, 4.0).unwrap();
        let x0 = vec2(2.0, -1.0);
        let mut o1 = NoisyGradientOracle::new(NoiseKind::SphereUniform, 1.0, 99);
        let three = run(OptimizerKind::AsgdScThreeVar, &p, &mut o1, &sched, &x0, 500, false)
            .unwrap();
        let mut o2 = ReplayOracle::new(three.noise_sequence(), 1.0);
        let elim = run(
            OptimizerKind::AsgdScEliminated,
            &p,
            &mut o2,
            &sched,
            &x0,
            500,
            false,
        )
        .unwrap();
        let gap = max_x_gap(&three, &elim);
        assert!(gap <= 1e-10, "gap {gap}");
    }

    #[test]
    fn eliminated_form_tracks_threevar_under_shared_noise_c() {
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::convex_power(0.2, 0.75, 0.5).unwrap();
        let x0 = vec2(2.0, -1.0);
        let mut o1 = NoisyGradientOracle::new(NoiseKind::GaussianIsotropic, 1.0, 7);
        let three = run(OptimizerKind::AsgdCThreeVar, &p, &mut o1, &sched, &x0, 500, false)
            .unwrap();
        let mut o2 = ReplayOracle::new(three.noise_sequence(), 1.0);
        let elim = run(
            OptimizerKind::AsgdCEliminated,
            &p,
            &mut o2,
            &sched,
            &x0,
            500,
            false,
        )
        .unwrap();
        let gap = max_x_gap(&three, &elim);
        assert!(gap <= 1e-10, "gap {gap}");
    }

    #[test]
    fn coupling_invariant_holds_along_runs() {
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::strongly_convex_decay(1.0, 4.0, 1.0, 2.0).unwrap();
        let mut oracle = NoisyGradientOracle::new(NoiseKind::GaussianIsotropic, 1.0, 5);
        let trace = run(
            OptimizerKind::AsgdScThreeVar,
            &p,
            &mut oracle,
            &sched,
            &vec2(1.0, 1.0),
            100,
            false,
        )
        .unwrap();
        for r in &trace.records {
            let w = schedules::w_sc(r.h, p.mu());
            let y = &r.x * (1.0 - w) + &r.v * w;
            let denom = 1.0 + y.norm();
            assert!((&y - &r.y).norm() / denom <= 1e-12);
        }
    }

    #[test]
    fn identical_seed_gives_identical_trace() {
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::constant(0.5, 0.5).unwrap();
        let x0 = vec2(1.0, 1.0);
        let mk = || NoisyGradientOracle::new(NoiseKind::GaussianIsotropic, 1.0, 31);
        let mut o1 = mk();
        let a = run(OptimizerKind::AsgdScThreeVar, &p, &mut o1, &sched, &x0, 100, false).unwrap();
        let mut o2 = mk();
        let b = run(OptimizerKind::AsgdScThreeVar, &p, &mut o2, &sched, &x0, 100, false).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.x, rb.x);
            assert_eq!(ra.v, rb.v);
        }
    }

    #[test]
    fn noiseless_oracle_reproduces_deterministic_run() {
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::constant(0.5, 0.5).unwrap();
        let x0 = vec2(1.0, 1.0);
        let mut o1 = NoisyGradientOracle::new(NoiseKind::GaussianIsotropic, 0.0, 3);
        let a = run(OptimizerKind::AsgdScThreeVar, &p, &mut o1, &sched, &x0, 50, false).unwrap();
        let mut o2 = noiseless();
        let b = run(OptimizerKind::AsgdScThreeVar, &p, &mut o2, &sched, &x0, 50, false).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.x, rb.x);
        }
    }

    #[test]
    fn warmstart_runs_constant_phase_then_switches() {
        let p = quadratic(&[1.0, 4.0]);
        let sched = Schedule::strongly_convex_decay(1.0, 4.0, 1.0, 1.0).unwrap();
        let x0 = vec2(4.0, 4.0); // E0 well above E_crit = 1
        let mut oracle = NoisyGradientOracle::new(NoiseKind::SphereUniform, 1.0, 11);
        let trace = run(
            OptimizerKind::AsgdScThreeVar,
            &p,
            &mut oracle,
            &sched,
            &x0,
            100,
            true,
        )
        .unwrap();
        let switch = trace.meta.switch_step.unwrap();
        assert!(switch > 0);
        assert_eq!(trace.len(), switch + 100 + 1);
        // constant 1/sqrt(L) steps during the warm phase
        for r in &trace.records[..switch] {
            assert_relative_eq!(r.h, 0.5);
        }
        // decaying afterwards
        assert!(trace.records[switch].h <= 0.5 + 1e-12);
        assert!(trace.records[switch + 1].h < trace.records[switch].h);
    }

    #[test]
    fn deterministic_constant_step_sc_contracts_at_theoretical_rate() {
        let p = quadratic(&[1.0, 4.0]);
        let h = 0.5;
        let sched = Schedule::constant(h, h).unwrap();
        let mut oracle = noiseless();
        let trace = run(
            OptimizerKind::AsgdScThreeVar,
            &p,
            &mut oracle,
            &sched,
            &vec2(1.0, 1.0),
            200,
            false,
        )
        .unwrap();
        let e0 = trace.records[0].lyap_sc.unwrap();
        let r = 1.0 - h * p.mu().sqrt();
        for rec in &trace.records {
            let bound = r.powi(rec.k as i32) * e0;
            assert!(
                rec.lyap_sc.unwrap() <= bound * (1.0 + 1e-9) + 1e-300,
                "k = {}: E = {} > bound {}",
                rec.k,
                rec.lyap_sc.unwrap(),
                bound
            );
        }
    }
}
