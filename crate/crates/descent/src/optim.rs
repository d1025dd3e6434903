//! First-order optimizers: norm-adapted gradient descent, plain and momentum
//! SGD, Adam, RMSprop, Adagrad, an exponential-decay schedule, and the
//! equivalent-alpha monitor hybrid.
//!
//! A norm-adapted step from parameters `p` with objective value `f`, gradient
//! `g`, and lower bound `L` moves to `p - c g` with
//!
//! ```text
//! c = min(1, alpha * (f - L) / ||g||^2)
//! ```
//!
//! so that, to first order, the step cuts the remaining objective by the
//! fraction `alpha`. The cap of 1 guards against tiny gradient norms; it is
//! configurable through [`OptimizerSpec::NaSgd::clamp`] but defaults to 1 and
//! there is rarely a reason to touch it.
//!
//! Every stepper shares a divergence guard: non-finite inputs, non-finite
//! outputs, or parameters exceeding [`DIVERGENCE_LIMIT`] in magnitude mark
//! the outcome diverged and freeze the optimizer; subsequent calls return the
//! parameters untouched.

use serde::{Deserialize, Serialize};

use crate::vector::{axpy, dot, norm_sq, ParamVector};

/// Magnitude bound beyond which a run counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Everything observable about a single optimizer step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Parameters after the step (equal to the inputs when frozen/diverged).
    pub new_params: ParamVector,
    /// Scalar multiplying the gradient for this step. For optimizers whose
    /// update is not a scalar multiple of the gradient (momentum, Adam,
    /// RMSprop, Adagrad) this is the projection `<update, g> / ||g||^2`, so
    /// equivalent-hyperparameter diagnostics stay well defined.
    pub coefficient: f64,
    /// Objective value the step was computed from.
    pub loss_before: f64,
    /// `||g||^2` of the gradient the step was computed from.
    pub grad_norm_sq: f64,
    /// Norm-adapted only: the coefficient hit its cap.
    pub clamped: bool,
    /// Norm-adapted only: `value < lower_bound`, numerator clamped to zero
    /// and the step nulled.
    pub below_bound: bool,
    /// The divergence guard fired; the optimizer is frozen from here on.
    pub diverged: bool,
}

/// Declarative optimizer configuration. Builds a fresh [`Optimizer`] via
/// [`OptimizerSpec::build`]; serializable so experiment manifests can echo it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OptimizerSpec {
    #[serde(rename = "sgd")]
    Sgd { eta: f64 },
    #[serde(rename = "sgd-momentum")]
    SgdMomentum { eta: f64, mu: f64 },
    #[serde(rename = "nasgd")]
    NaSgd {
        alpha: f64,
        #[serde(default = "default_clamp")]
        clamp: f64,
    },
    #[serde(rename = "adam")]
    Adam {
        eta: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
    #[serde(rename = "rmsprop")]
    RmsProp {
        eta: f64,
        #[serde(default = "default_rms_decay")]
        decay: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
    #[serde(rename = "adagrad")]
    Adagrad {
        eta: f64,
        #[serde(default = "default_adagrad_eps")]
        eps: f64,
    },
    #[serde(rename = "sgd-exp-decay")]
    SgdExpDecay { eta0: f64, base: f64 },
    #[serde(rename = "alpha-monitor")]
    AlphaMonitor {
        #[serde(default = "default_monitor_eta0")]
        eta0: f64,
        #[serde(default = "default_monitor_threshold")]
        threshold: f64,
        #[serde(default = "default_monitor_patience")]
        patience: u32,
        #[serde(default = "default_monitor_factor")]
        factor: f64,
    },
}

fn default_clamp() -> f64 {
    1.0
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_rms_decay() -> f64 {
    0.99
}
fn default_adagrad_eps() -> f64 {
    1e-10
}
fn default_monitor_eta0() -> f64 {
    0.1
}
fn default_monitor_threshold() -> f64 {
    2.0
}
fn default_monitor_patience() -> u32 {
    3
}
fn default_monitor_factor() -> f64 {
    1.0 / 3.0
}

impl OptimizerSpec {
    pub fn sgd(eta: f64) -> Self {
        OptimizerSpec::Sgd { eta }
    }

    pub fn sgd_momentum(eta: f64, mu: f64) -> Self {
        OptimizerSpec::SgdMomentum { eta, mu }
    }

    /// Norm-adapted descent with the default coefficient cap of 1.
    ///
    /// `alpha` is the per-step percent-decrease target. Any positive value is
    /// accepted; under the first-order model only (0, 1] makes literal sense,
    /// and in practice values up to 2 remain useful.
    pub fn nasgd(alpha: f64) -> Self {
        OptimizerSpec::NaSgd {
            alpha,
            clamp: default_clamp(),
        }
    }

    pub fn adam(eta: f64) -> Self {
        OptimizerSpec::Adam {
            eta,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    pub fn rmsprop(eta: f64) -> Self {
        OptimizerSpec::RmsProp {
            eta,
            decay: default_rms_decay(),
            eps: default_adam_eps(),
        }
    }

    pub fn adagrad(eta: f64) -> Self {
        OptimizerSpec::Adagrad {
            eta,
            eps: default_adagrad_eps(),
        }
    }

    pub fn sgd_exp_decay(eta0: f64, base: f64) -> Self {
        OptimizerSpec::SgdExpDecay { eta0, base }
    }

    pub fn alpha_monitor() -> Self {
        OptimizerSpec::AlphaMonitor {
            eta0: default_monitor_eta0(),
            threshold: default_monitor_threshold(),
            patience: default_monitor_patience(),
            factor: default_monitor_factor(),
        }
    }

    /// Human-readable configuration label, e.g. `SGD(η = 0.001, μ = 0.9)`.
    pub fn label(&self) -> String {
        match self {
            OptimizerSpec::Sgd { eta } => format!("SGD(η = {eta})"),
            OptimizerSpec::SgdMomentum { eta, mu } => format!("SGD(η = {eta}, μ = {mu})"),
            OptimizerSpec::NaSgd { alpha, .. } => format!("NaSGD(α = {alpha})"),
            OptimizerSpec::Adam { eta, .. } => format!("Adam(η = {eta})"),
            OptimizerSpec::RmsProp { eta, .. } => format!("RMSprop(η = {eta})"),
            OptimizerSpec::Adagrad { eta, .. } => format!("Adagrad(η = {eta})"),
            OptimizerSpec::SgdExpDecay { eta0, base } => {
                format!("SGD(η₀ = {eta0}, base = {base})")
            }
            OptimizerSpec::AlphaMonitor {
                eta0,
                threshold,
                patience,
                factor,
            } => format!(
                "alpha-monitor(η₀ = {eta0}, threshold = {threshold}, patience = {patience}, factor = {factor})"
            ),
        }
    }

    /// Builds a fresh optimizer with zeroed buffers and counters.
    pub fn build(&self) -> Optimizer {
        Optimizer::new(self.clone())
    }
}

impl std::fmt::Display for OptimizerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// `eta0 * base^step`, the per-step learning rate of an exponential schedule.
pub fn exp_decay_schedule(eta0: f64, base: f64, step: u64) -> f64 {
    debug_assert!(eta0 > 0.0 && base > 0.0 && base <= 1.0);
    eta0 * base.powi(i32::try_from(step).expect("schedule step exceeds i32 range"))
}

enum Engine {
    Sgd {
        eta: f64,
    },
    SgdMomentum {
        eta: f64,
        mu: f64,
        velocity: Option<ParamVector>,
    },
    NaSgd {
        alpha: f64,
        clamp: f64,
    },
    Adam {
        eta: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        first: Option<ParamVector>,
        second: Option<ParamVector>,
    },
    RmsProp {
        eta: f64,
        decay: f64,
        eps: f64,
        acc: Option<ParamVector>,
    },
    Adagrad {
        eta: f64,
        eps: f64,
        acc: Option<ParamVector>,
    },
    SgdExpDecay {
        eta0: f64,
        base: f64,
    },
    AlphaMonitor {
        eta: f64,
        threshold: f64,
        patience: u32,
        factor: f64,
        streak: u32,
    },
}

/// Mutable per-run optimizer state. One owner per run; independent runs may
/// execute in parallel with their own instances.
pub struct Optimizer {
    spec: OptimizerSpec,
    engine: Engine,
    step_count: u64,
    frozen: bool,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Self {
        let engine = match spec {
            OptimizerSpec::Sgd { eta } => Engine::Sgd { eta },
            OptimizerSpec::SgdMomentum { eta, mu } => Engine::SgdMomentum {
                eta,
                mu,
                velocity: None,
            },
            OptimizerSpec::NaSgd { alpha, clamp } => Engine::NaSgd { alpha, clamp },
            OptimizerSpec::Adam {
                eta,
                beta1,
                beta2,
                eps,
            } => Engine::Adam {
                eta,
                beta1,
                beta2,
                eps,
                first: None,
                second: None,
            },
            OptimizerSpec::RmsProp { eta, decay, eps } => Engine::RmsProp {
                eta,
                decay,
                eps,
                acc: None,
            },
            OptimizerSpec::Adagrad { eta, eps } => Engine::Adagrad {
                eta,
                eps,
                acc: None,
            },
            OptimizerSpec::SgdExpDecay { eta0, base } => Engine::SgdExpDecay { eta0, base },
            OptimizerSpec::AlphaMonitor {
                eta0,
                threshold,
                patience,
                factor,
            } => Engine::AlphaMonitor {
                eta: eta0,
                threshold,
                patience,
                factor,
                streak: 0,
            },
        };
        Optimizer {
            spec,
            engine,
            step_count: 0,
            frozen: false,
        }
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// True once the divergence guard has fired; further steps are no-ops.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Current learning rate of the alpha monitor (its `eta0` after decays).
    pub fn monitor_eta(&self) -> Option<f64> {
        match &self.engine {
            Engine::AlphaMonitor { eta, .. } => Some(*eta),
            _ => None,
        }
    }

    fn frozen_outcome(&self, params: &ParamVector, value: f64, grad_norm_sq: f64) -> StepOutcome {
        StepOutcome {
            new_params: params.clone(),
            coefficient: 0.0,
            loss_before: value,
            grad_norm_sq,
            clamped: false,
            below_bound: false,
            diverged: true,
        }
    }

    /// Advances one step from `params` given the objective value and gradient
    /// there. `lower_bound` is only consulted by the norm-adapted and
    /// alpha-monitor rules; pass the objective's known bound (usually 0).
    pub fn step(
        &mut self,
        params: &ParamVector,
        value: f64,
        grad: &ParamVector,
        lower_bound: f64,
    ) -> StepOutcome {
        let gns = norm_sq(grad);
        if self.frozen {
            return self.frozen_outcome(params, value, gns);
        }
        if !value.is_finite() || !grad.all_finite() || !params.all_finite() {
            self.frozen = true;
            return self.frozen_outcome(params, value, gns);
        }

        let mut clamped = false;
        let mut below_bound = false;
        // Buffer updates are staged and only committed once the divergence
        // guard has passed, so a diverging call leaves the state untouched.
        let mut staged_velocity: Option<ParamVector> = None;
        let mut staged_first: Option<ParamVector> = None;
        let mut staged_second: Option<ParamVector> = None;
        let mut staged_acc: Option<ParamVector> = None;
        let mut staged_monitor: Option<(f64, u32)> = None;

        let (new_params, coefficient) = match &self.engine {
            Engine::Sgd { eta } => (axpy(-*eta, grad, params), *eta),
            Engine::SgdExpDecay { eta0, base } => {
                let eta = exp_decay_schedule(*eta0, *base, self.step_count);
                (axpy(-eta, grad, params), eta)
            }
            Engine::SgdMomentum { eta, mu, velocity } => {
                let velocity = velocity
                    .clone()
                    .unwrap_or_else(|| ParamVector::zeros(params.len()));
                let next_v = ParamVector::new(
                    velocity
                        .iter()
                        .zip(grad.iter())
                        .map(|(v, g)| *mu * v + g)
                        .collect(),
                );
                let new_params = axpy(-*eta, &next_v, params);
                let coefficient = if gns > 0.0 {
                    *eta * dot(&next_v, grad) / gns
                } else {
                    0.0
                };
                staged_velocity = Some(next_v);
                (new_params, coefficient)
            }
            Engine::NaSgd { alpha, clamp } => {
                let mut numerator = value - lower_bound;
                if numerator < 0.0 {
                    numerator = 0.0;
                    below_bound = true;
                }
                let coefficient = if gns == 0.0 {
                    0.0
                } else {
                    let ratio = numerator / gns;
                    let raw = *alpha * ratio;
                    if raw > *clamp {
                        clamped = true;
                        *clamp
                    } else {
                        raw
                    }
                };
                (axpy(-coefficient, grad, params), coefficient)
            }
            Engine::Adam {
                eta,
                beta1,
                beta2,
                eps,
                first,
                second,
            } => {
                let t = self.step_count + 1;
                let m = first
                    .clone()
                    .unwrap_or_else(|| ParamVector::zeros(params.len()));
                let v = second
                    .clone()
                    .unwrap_or_else(|| ParamVector::zeros(params.len()));
                let next_m = ParamVector::new(
                    m.iter()
                        .zip(grad.iter())
                        .map(|(mi, g)| *beta1 * mi + (1.0 - *beta1) * g)
                        .collect(),
                );
                let next_v = ParamVector::new(
                    v.iter()
                        .zip(grad.iter())
                        .map(|(vi, g)| *beta2 * vi + (1.0 - *beta2) * (g * g))
                        .collect(),
                );
                let bc1 = 1.0 - beta1.powi(t as i32);
                let bc2 = 1.0 - beta2.powi(t as i32);
                let update = ParamVector::new(
                    next_m
                        .iter()
                        .zip(next_v.iter())
                        .map(|(mi, vi)| *eta * (mi / bc1) / ((vi / bc2).sqrt() + *eps))
                        .collect(),
                );
                let new_params = axpy(-1.0, &update, params);
                let coefficient = if gns > 0.0 {
                    dot(&update, grad) / gns
                } else {
                    0.0
                };
                staged_first = Some(next_m);
                staged_second = Some(next_v);
                (new_params, coefficient)
            }
            Engine::RmsProp {
                eta,
                decay,
                eps,
                acc,
            } => {
                let acc0 = acc
                    .clone()
                    .unwrap_or_else(|| ParamVector::zeros(params.len()));
                let next_acc = ParamVector::new(
                    acc0.iter()
                        .zip(grad.iter())
                        .map(|(a, g)| *decay * a + (1.0 - *decay) * (g * g))
                        .collect(),
                );
                let update = ParamVector::new(
                    grad.iter()
                        .zip(next_acc.iter())
                        .map(|(g, a)| *eta * g / (a.sqrt() + *eps))
                        .collect(),
                );
                let new_params = axpy(-1.0, &update, params);
                let coefficient = if gns > 0.0 {
                    dot(&update, grad) / gns
                } else {
                    0.0
                };
                staged_acc = Some(next_acc);
                (new_params, coefficient)
            }
            Engine::Adagrad { eta, eps, acc } => {
                let acc0 = acc
                    .clone()
                    .unwrap_or_else(|| ParamVector::zeros(params.len()));
                let next_acc = ParamVector::new(
                    acc0.iter()
                        .zip(grad.iter())
                        .map(|(a, g)| a + g * g)
                        .collect(),
                );
                let update = ParamVector::new(
                    grad.iter()
                        .zip(next_acc.iter())
                        .map(|(g, a)| *eta * g / (a.sqrt() + *eps))
                        .collect(),
                );
                let new_params = axpy(-1.0, &update, params);
                let coefficient = if gns > 0.0 {
                    dot(&update, grad) / gns
                } else {
                    0.0
                };
                staged_acc = Some(next_acc);
                (new_params, coefficient)
            }
            Engine::AlphaMonitor {
                eta,
                threshold,
                patience,
                factor,
                streak,
            } => {
                // Equivalent alpha of the step about to be taken; a value at
                // or below the bound with a live gradient counts as infinite.
                let alpha_eq = if gns == 0.0 {
                    0.0
                } else if value <= lower_bound {
                    f64::INFINITY
                } else {
                    *eta / ((value - lower_bound) / gns)
                };
                let mut next_streak = if alpha_eq >= *threshold {
                    streak + 1
                } else {
                    0
                };
                let mut next_eta = *eta;
                if next_streak >= *patience {
                    next_eta = *eta * *factor;
                    next_streak = 0;
                }
                let new_params = axpy(-next_eta, grad, params);
                staged_monitor = Some((next_eta, next_streak));
                (new_params, next_eta)
            }
        };

        if !new_params.all_finite() || new_params.max_abs() > DIVERGENCE_LIMIT {
            self.frozen = true;
            return self.frozen_outcome(params, value, gns);
        }

        match &mut self.engine {
            Engine::SgdMomentum { velocity, .. } => *velocity = staged_velocity,
            Engine::Adam { first, second, .. } => {
                *first = staged_first;
                *second = staged_second;
            }
            Engine::RmsProp { acc, .. } | Engine::Adagrad { acc, .. } => *acc = staged_acc,
            Engine::AlphaMonitor { eta, streak, .. } => {
                let (e, s) = staged_monitor.expect("monitor staged state");
                *eta = e;
                *streak = s;
            }
            _ => {}
        }
        self.step_count += 1;

        StepOutcome {
            new_params,
            coefficient,
            loss_before: value,
            grad_norm_sq: gns,
            clamped,
            below_bound,
            diverged: false,
        }
    }
}
