//! Learning-rate schedules and the derived quantities `t_k` and `w_k`.
//!
//! Discrete-time convention: `t_k = sum_{i=0}^{k+1} h_i` (one step ahead of
//! the plain cumulative sum), with `t_{-1} = h_0`. For a constant step this
//! gives `t_k = h (k + 2)` and hence `w_k = 2 h_k / t_k = 2/(k+2)`, the
//! classical Nesterov weights. For strictly decreasing schedules `w_0` can
//! exceed 1; that is harmless because runs start from `v_0 = x_0`, which
//! makes `y_0 = x_0` regardless of `w_0`, and `w_k <= 1` for all `k >= 1`.

use crate::error::{Error, Result};

/// A learning-rate schedule `h_k` together with its admissible step cap.
#[derive(Debug, Clone)]
pub struct Schedule {
    kind: ScheduleKind,
    step_cap: f64,
}

#[derive(Debug, Clone)]
pub enum ScheduleKind {
    /// `h_k = h`.
    Constant { h: f64 },
    /// `h_k = 2 / (sqrt(mu) (k + k0))`, `k0 = max{2 sqrt(C_f), 4 sigma^2 / (mu E0)}`.
    StronglyConvexDecay {
        mu: f64,
        cond: f64,
        sigma2: f64,
        e0: f64,
        k0: f64,
    },
    /// `h_k = min(c / (k+1)^exponent, cap)`; early terms clamp to the cap.
    ConvexPower { c: f64, exponent: f64 },
    /// `h_k = 2 / (mu (k + offset))`, `offset = 1 / (alpha_sc E0)`,
    /// `alpha_sc = mu / (2 (C_f + 1) sigma^2)`.
    GdStronglyConvexDecay { mu: f64, offset: f64 },
    /// `h_k = c / k^exponent` for `k >= 1`, with `h_0 = h_1`.
    GdConvexPower { c: f64, exponent: f64 },
    /// `h_k = 2 / (r_E (k + offset))`, `offset = 1 / (alpha E0)`,
    /// `alpha = r_E^2 / (2 L_E g2bar^2 sigma^2)`.
    AbstractDecay { r_e: f64, offset: f64 },
}

impl Schedule {
    pub fn constant(h: f64, step_cap: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter("constant step must be positive".into()));
        }
        if h > step_cap * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "constant step {h} exceeds the admissible cap {step_cap}"
            )));
        }
        Ok(Schedule {
            kind: ScheduleKind::Constant { h },
            step_cap,
        })
    }

    /// Accelerated strongly convex decay. The cap `1/sqrt(L)` is implied by
    /// `k0 >= 2 sqrt(C_f)`, so construction cannot violate it.
    pub fn strongly_convex_decay(mu: f64, cond: f64, sigma2: f64, e0: f64) -> Result<Self> {
        if !(mu > 0.0) || !(cond >= 1.0) || !(sigma2 >= 0.0) || !(e0 > 0.0) {
            return Err(Error::InvalidParameter(
                "strongly_convex_decay needs mu > 0, cond >= 1, sigma2 >= 0, e0 > 0".into(),
            ));
        }
        let k0 = (2.0 * cond.sqrt()).max(4.0 * sigma2 / (mu * e0));
        let lipschitz = mu * cond;
        Ok(Schedule {
            kind: ScheduleKind::StronglyConvexDecay {
                mu,
                cond,
                sigma2,
                e0,
                k0,
            },
            step_cap: 1.0 / lipschitz.sqrt(),
        })
    }

    pub fn convex_power(c: f64, exponent: f64, step_cap: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter("convex_power c must be positive".into()));
        }
        if !(2.0 / 3.0..1.0).contains(&exponent) {
            return Err(Error::InvalidParameter(
                "convex_power exponent must lie in [2/3, 1)".into(),
            ));
        }
        Ok(Schedule {
            kind: ScheduleKind::ConvexPower { c, exponent },
            step_cap,
        })
    }

    /// Plain-SGD strongly convex decay; cap `2/(L + mu)` checked at `h_0`.
    pub fn gd_strongly_convex_decay(mu: f64, cond: f64, sigma2: f64, e0: f64) -> Result<Self> {
        if !(mu > 0.0) || !(cond >= 1.0) || !(sigma2 > 0.0) || !(e0 > 0.0) {
            return Err(Error::InvalidParameter(
                "gd_strongly_convex_decay needs mu > 0, cond >= 1, sigma2 > 0, e0 > 0".into(),
            ));
        }
        let alpha_sc = mu / (2.0 * (cond + 1.0) * sigma2);
        let offset = 1.0 / (alpha_sc * e0);
        let lipschitz = mu * cond;
        let step_cap = 2.0 / (lipschitz + mu);
        let h0 = 2.0 / (mu * offset);
        if h0 > step_cap * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "gd_strongly_convex_decay: h_0 = {h0} exceeds 2/(L+mu) = {step_cap}; \
                 E0 is too large for this schedule"
            )));
        }
        Ok(Schedule {
            kind: ScheduleKind::GdStronglyConvexDecay { mu, offset },
            step_cap,
        })
    }

    pub fn gd_convex_power(c: f64, exponent: f64, step_cap: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter("gd_convex_power c must be positive".into()));
        }
        if !(2.0 / 3.0..1.0).contains(&exponent) {
            return Err(Error::InvalidParameter(
                "gd_convex_power exponent must lie in [2/3, 1)".into(),
            ));
        }
        if c > step_cap * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "gd_convex_power: h_1 = c = {c} exceeds the cap {step_cap}"
            )));
        }
        Ok(Schedule {
            kind: ScheduleKind::GdConvexPower { c, exponent },
            step_cap,
        })
    }

    pub fn abstract_decay(
        r_e: f64,
        l_e: f64,
        g2bar: f64,
        sigma2: f64,
        e0: f64,
        step_cap: f64,
    ) -> Result<Self> {
        if !(r_e > 0.0) || !(l_e > 0.0) || !(g2bar > 0.0) || !(sigma2 > 0.0) || !(e0 > 0.0) {
            return Err(Error::InvalidParameter(
                "abstract_decay needs r_e, l_e, g2bar, sigma2, e0 all > 0".into(),
            ));
        }
        let alpha = r_e * r_e / (2.0 * l_e * g2bar * g2bar * sigma2);
        let offset = 1.0 / (alpha * e0);
        let h0 = 2.0 / (r_e * offset);
        if h0 > step_cap * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "abstract_decay: h_0 = {h0} exceeds the cap {step_cap}"
            )));
        }
        Ok(Schedule {
            kind: ScheduleKind::AbstractDecay { r_e, offset },
            step_cap,
        })
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn step_cap(&self) -> f64 {
        self.step_cap
    }

    /// `k0` of a strongly convex decay schedule.
    pub fn k0(&self) -> Option<f64> {
        match &self.kind {
            ScheduleKind::StronglyConvexDecay { k0, .. } => Some(*k0),
            _ => None,
        }
    }

    /// Rebuild a strongly convex decay schedule around a re-measured `E0`
    /// (used at the warm-start switch point).
    pub fn with_e0(&self, e0: f64) -> Result<Self> {
        match &self.kind {
            ScheduleKind::StronglyConvexDecay {
                mu, cond, sigma2, ..
            } => Schedule::strongly_convex_decay(*mu, *cond, *sigma2, e0),
            _ => Err(Error::InvalidParameter(
                "with_e0 applies only to strongly_convex_decay".into(),
            )),
        }
    }

    /// The step size at index `k >= 0`.
    pub fn h(&self, k: usize) -> f64 {
        let kf = k as f64;
        match &self.kind {
            ScheduleKind::Constant { h } => *h,
            ScheduleKind::StronglyConvexDecay { mu, k0, .. } => {
                2.0 / (mu.sqrt() * (kf + k0))
            }
            ScheduleKind::ConvexPower { c, exponent } => {
                (c / (kf + 1.0).powf(*exponent)).min(self.step_cap)
            }
            ScheduleKind::GdStronglyConvexDecay { mu, offset } => 2.0 / (mu * (kf + offset)),
            ScheduleKind::GdConvexPower { c, exponent } => {
                if k == 0 {
                    *c
                } else {
                    c / kf.powf(*exponent)
                }
            }
            ScheduleKind::AbstractDecay { r_e, offset } => 2.0 / (r_e * (kf + offset)),
        }
    }

    /// Whether `h(k)` was clamped to the cap (ConvexPower only).
    pub fn clamped(&self, k: usize) -> bool {
        match &self.kind {
            ScheduleKind::ConvexPower { c, exponent } => {
                c / (k as f64 + 1.0).powf(*exponent) > self.step_cap
            }
            _ => false,
        }
    }

    /// Discrete time `t_k = sum_{i=0}^{k+1} h_i`, defined for `k >= -1`.
    pub fn t(&self, k: i64) -> f64 {
        assert!(k >= -1, "t is defined for k >= -1");
        if let ScheduleKind::Constant { h } = &self.kind {
            return h * (k + 2) as f64;
        }
        let mut s = 0.0;
        for i in 0..=(k + 1) as usize {
            s += self.h(i);
        }
        s
    }
}

/// Strongly convex coupling weight `w = h sqrt(mu) / (1 + h sqrt(mu))`.
pub fn w_sc(h: f64, mu: f64) -> f64 {
    debug_assert!(h > 0.0 && mu > 0.0);
    let hs = h * mu.sqrt();
    hs / (1.0 + hs)
}

/// Convex coupling weight `w_k = 2 h_k / t_k`.
pub fn w_c(schedule: &Schedule, k: usize) -> f64 {
    2.0 * schedule.h(k) / schedule.t(k as i64)
}

/// Critical Lyapunov level `E_crit = 2 sigma^2 / sqrt(mu L)` below which the
/// decaying schedule's induction applies.
pub fn e_crit(sigma2: f64, mu: f64, lipschitz: f64) -> f64 {
    assert!(mu > 0.0 && lipschitz > 0.0);
    2.0 * sigma2 / (mu * lipschitz).sqrt()
}

/// Maximum number of constant-step (`h = 1/sqrt(L)`) warm-start iterations
/// needed before `E^SC <= E_crit` is guaranteed in expectation.
pub fn warmstart_steps(e0: f64, e_crit: f64, mu: f64, lipschitz: f64) -> usize {
    assert!(e0 > 0.0 && mu > 0.0 && mu <= lipschitz);
    if e0 <= e_crit {
        return 0;
    }
    if mu == lipschitz {
        // r = 1 - sqrt(mu/L) = 0: one constant step already contracts fully.
        return 1;
    }
    let r = 1.0 - (mu / lipschitz).sqrt();
    let k = (e_crit.ln() - (2.0 * e0).ln()) / r.ln();
    k.ceil().max(0.0) as usize
}
