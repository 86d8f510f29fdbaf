//! Accelerated stochastic gradient descent with per-step Lyapunov verification.
//!
//! The crate provides:
//!
//! - test objectives with exact curvature metadata ([`problems`]),
//! - seeded noisy-gradient oracles ([`oracle`]),
//! - the learning-rate schedules used by the accelerated methods ([`schedules`]),
//! - the optimizer iterations themselves, in coupled three-variable and
//!   eliminated two-variable form ([`optimizers`]),
//! - Lyapunov functions and per-step dissipation verifiers ([`lyapunov`]),
//! - the continuous-time systems the iterations discretize ([`ode`]),
//! - the abstract rate-generating Lyapunov framework with its gradient-descent
//!   instantiations ([`abstract_lyapunov`]),
//! - a seeded Monte-Carlo experiment harness ([`harness`]).

pub mod abstract_lyapunov;
pub mod error;
pub mod harness;
pub mod lyapunov;
pub mod ode;
pub mod optimizers;
pub mod oracle;
pub mod problems;
pub mod schedules;

pub use error::{Error, Result};
pub use harness::{AggregateCurve, RateBound, RunConfig};
pub use lyapunov::DissipationReport;
pub use optimizers::{IterateState, OptimizerKind, Trace};
pub use oracle::{NoiseKind, NoisyGradientOracle};
pub use problems::Problem;
pub use schedules::Schedule;

/// State vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix type used for Hessians and problem data.
pub type Matrix = nalgebra::DMatrix<f64>;
