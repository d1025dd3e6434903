//! Norm-adapted gradient descent and a deterministic benchmark harness.
//!
//! Norm-adapted descent replaces the fixed learning rate of gradient descent
//! with a per-step coefficient `min(1, alpha * (f - L) / ||grad||^2)`, the
//! Newton-Raphson step toward a root of `f - L` restricted to the negative
//! gradient ray. Under its first-order model every step cuts the remaining
//! objective by the fraction `alpha`, which makes the hyperparameter scale
//! free: the method treats `f` and `k f` alike.
//!
//! The crate bundles the optimizer family ([`optim`]), the analytic valley
//! benchmarks ([`objective`]), hyperparameter-translation diagnostics
//! ([`diagnostics`]), a dense tanh layer with the teacher-student matching
//! task ([`nn`]), and seeded experiment runners ([`experiments`]). The
//! companion `descent-cli` crate exposes all of it as CSV-emitting
//! subcommands.

pub mod diagnostics;
pub mod experiments;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod vector;

pub use objective::{Objective, QuadraticValley, Rosenbrock};
pub use optim::{Optimizer, OptimizerSpec, StepOutcome};
pub use vector::ParamVector;
