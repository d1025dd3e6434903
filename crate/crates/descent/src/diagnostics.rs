//! Hyperparameter translation between plain and norm-adapted descent, the
//! first-order step estimate, vector-field length ratios, and trajectory
//! tracing.
//!
//! Both algorithms move along the negative gradient ray, so from any point a
//! step of one can be restated as a step of the other: the equivalent alpha
//! of an SGD step is `eta * ||g||^2 / (f - L)`, and the equivalent eta of a
//! norm-adapted step is its realized coefficient. Conversions here share the
//! `(f - L) / ||g||^2` ratio with the norm-adapted stepper so a converted
//! hyperparameter replays the original step to within a rounding.

use crate::objective::Objective;
use crate::optim::{OptimizerSpec, StepOutcome};
use crate::vector::{norm_sq, ParamVector};

/// Per-step translation record for a single run.
#[derive(Debug, Clone)]
pub struct RosettaRecord {
    pub step: u64,
    /// Realized scalar coefficient of the step (the equivalent eta).
    pub equivalent_eta: f64,
    /// Equivalent percent-decrease target, when defined.
    pub equivalent_alpha: Option<f64>,
    pub loss: f64,
}

/// The alpha that would make a norm-adapted step reproduce an SGD step of
/// rate `eta` from a point with objective value `value` and squared gradient
/// norm `grad_norm_sq`.
///
/// Returns `None` when the translation is undefined (`value <= lower_bound`
/// or a zero gradient); that is a diagnostic gap, not a failure.
pub fn equivalent_alpha(eta: f64, value: f64, grad_norm_sq: f64, lower_bound: f64) -> Option<f64> {
    if value <= lower_bound || grad_norm_sq <= 0.0 {
        return None;
    }
    let ratio = (value - lower_bound) / grad_norm_sq;
    Some(eta / ratio)
}

/// The learning rate that would make an SGD step reproduce this norm-adapted
/// step: its realized coefficient.
pub fn equivalent_eta(outcome: &StepOutcome) -> f64 {
    outcome.coefficient
}

/// First-order prediction of the objective after a gradient step of rate
/// `eta`: `value - eta * ||g||^2`.
pub fn first_order_estimate(value: f64, grad_norm_sq: f64, eta: f64) -> f64 {
    value - eta * grad_norm_sq
}

/// Uniform grid specification over one axis.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        assert!(count >= 1, "grid needs at least one point");
        assert!(
            min.is_finite() && max.is_finite(),
            "grid bounds must be finite"
        );
        GridSpec { min, max, count }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| self.min + step * i as f64)
            .collect()
    }
}

/// One grid sample of the field length ratio.
#[derive(Debug, Clone, Copy)]
pub struct FieldRatioPoint {
    pub x: f64,
    pub y: f64,
    /// `> 1` where the norm-adapted field is longer, `< 1` where the plain
    /// gradient field is, `+inf` at nonzero-value stationary points.
    pub ratio: f64,
}

/// Ratio of the two limiting vector-field lengths at each grid point.
///
/// At point `p` the plain field has length `eta_star * ||g||` and the
/// norm-adapted field `alpha_star * (f - L) / ||g||`; the emitted ratio is
/// norm-adapted over plain. Points with `f = L` give 0; otherwise a zero
/// gradient gives the `+inf` sentinel.
pub fn field_ratio_grid(
    obj: &dyn Objective,
    xs: &GridSpec,
    ys: &GridSpec,
    eta_star: f64,
    alpha_star: f64,
) -> Vec<FieldRatioPoint> {
    assert_eq!(obj.dim(), 2, "field grid requires a 2-d objective");
    let lower = obj.lower_bound();
    let mut out = Vec::with_capacity(xs.count * ys.count);
    for &x in &xs.points() {
        for &y in &ys.points() {
            let eval = obj.evaluate(&ParamVector::new(vec![x, y]));
            let gns = norm_sq(&eval.gradient);
            let excess = eval.value - lower;
            let ratio = if excess == 0.0 {
                0.0
            } else if gns == 0.0 {
                f64::INFINITY
            } else {
                alpha_star * excess / (eta_star * gns)
            };
            out.push(FieldRatioPoint { x, y, ratio });
        }
    }
    out
}

/// Iterate sequence of an optimizer run, including the start point.
#[derive(Debug, Clone)]
pub struct Trace {
    pub points: Vec<ParamVector>,
    pub diverged: bool,
}

/// Runs `spec` on `obj` from `start` for up to `n_steps` updates and returns
/// the visited points. Divergence truncates the trace; the offending point is
/// not included.
pub fn trajectory_trace(
    obj: &dyn Objective,
    spec: &OptimizerSpec,
    start: &ParamVector,
    n_steps: u64,
) -> Trace {
    let mut optimizer = spec.build();
    let mut points = Vec::with_capacity(n_steps as usize + 1);
    let mut params = start.clone();
    points.push(params.clone());
    for _ in 0..n_steps {
        let eval = obj.evaluate(&params);
        let out = optimizer.step(&params, eval.value, &eval.gradient, obj.lower_bound());
        if out.diverged {
            return Trace {
                points,
                diverged: true,
            };
        }
        params = out.new_params;
        points.push(params.clone());
    }
    Trace {
        points,
        diverged: false,
    }
}

/// Like [`trajectory_trace`] but emitting the per-step translation record
/// instead of the raw points.
pub fn rosetta_trace(
    obj: &dyn Objective,
    spec: &OptimizerSpec,
    start: &ParamVector,
    n_steps: u64,
) -> Vec<RosettaRecord> {
    let mut optimizer = spec.build();
    let mut params = start.clone();
    let lower = obj.lower_bound();
    let mut records = Vec::with_capacity(n_steps as usize);
    for step in 0..n_steps {
        let eval = obj.evaluate(&params);
        let out = optimizer.step(&params, eval.value, &eval.gradient, lower);
        if out.diverged {
            break;
        }
        records.push(RosettaRecord {
            step,
            equivalent_eta: equivalent_eta(&out),
            equivalent_alpha: equivalent_alpha(
                out.coefficient,
                out.loss_before,
                out.grad_norm_sq,
                lower,
            ),
            loss: out.loss_before,
        });
        params = out.new_params;
    }
    records
}
