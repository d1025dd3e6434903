//! Objective functions: the evaluation contract, the two analytic valley
//! benchmarks, and a scaling wrapper.
//!
//! Evaluators return value and gradient together because the norm-adapted
//! update needs both at every step; in the network case a split interface
//! would double the work.
//!
//! The arithmetic in `QuadraticValley` and `Rosenbrock` is written in a fixed
//! expression order and must not be "simplified": step-count reproducibility
//! depends on the exact rounding sequence.

use crate::vector::ParamVector;

/// Value and gradient of an objective at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: ParamVector,
}

/// A deterministic, differentiable objective with a known lower bound.
///
/// Implementations must be pure: concurrent evaluations at different points
/// are allowed.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Known infimum of the objective; 0 unless stated otherwise.
    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn evaluate(&self, p: &ParamVector) -> Evaluation;
}

/// `q(x, y) = 8x^2 + y^2/2` — a steep anisotropic bowl whose valley floor is
/// the y-axis.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticValley;

impl Objective for QuadraticValley {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, p: &ParamVector) -> Evaluation {
        assert_eq!(
            p.len(),
            2,
            "QuadraticValley expects 2 parameters, got {}",
            p.len()
        );
        let (x, y) = (p[0], p[1]);
        let value = 8.0 * x * x + 0.5 * y * y;
        Evaluation {
            value,
            gradient: ParamVector::new(vec![16.0 * x, y]),
        }
    }
}

/// `r(x, y) = (1 - x)^2 + 100 (y - x^2)^2` — the Rosenbrock function, with a
/// parabolic valley along `y = x^2` and the minimum at (1, 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, p: &ParamVector) -> Evaluation {
        assert_eq!(
            p.len(),
            2,
            "Rosenbrock expects 2 parameters, got {}",
            p.len()
        );
        let (x, y) = (p[0], p[1]);
        let t = 1.0 - x;
        let u = y - x * x;
        let value = t * t + 100.0 * (u * u);
        let gx = -2.0 * t - 400.0 * x * u;
        let gy = 200.0 * u;
        Evaluation {
            value,
            gradient: ParamVector::new(vec![gx, gy]),
        }
    }
}

/// An objective multiplied by a positive constant: value, gradient, and lower
/// bound all scale by `factor`.
#[derive(Debug, Clone)]
pub struct Scaled<O> {
    base: O,
    factor: f64,
}

/// Wraps `base` as `factor * base`.
///
/// Panics unless `factor` is finite and positive.
pub fn scaled<O: Objective>(base: O, factor: f64) -> Scaled<O> {
    assert!(
        factor.is_finite() && factor > 0.0,
        "scaled: factor must be finite and positive, got {factor}"
    );
    Scaled { base, factor }
}

impl<O: Objective> Objective for Scaled<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn lower_bound(&self) -> f64 {
        self.factor * self.base.lower_bound()
    }

    fn evaluate(&self, p: &ParamVector) -> Evaluation {
        let eval = self.base.evaluate(p);
        Evaluation {
            value: self.factor * eval.value,
            gradient: ParamVector::new(eval.gradient.iter().map(|g| self.factor * g).collect()),
        }
    }
}

/// Central-difference gradient, `(f(p + h e_i) - f(p - h e_i)) / (2h)` per
/// coordinate. Test oracle for hand-coded gradients; `h` must be positive.
pub fn finite_diff_grad(obj: &dyn Objective, p: &ParamVector, h: f64) -> ParamVector {
    assert!(h > 0.0, "finite_diff_grad: h must be positive");
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let mut plus = p.as_slice().to_vec();
        let mut minus = p.as_slice().to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = obj.evaluate(&ParamVector::new(plus)).value;
        let fm = obj.evaluate(&ParamVector::new(minus)).value;
        grad.push((fp - fm) / (2.0 * h));
    }
    ParamVector::new(grad)
}
