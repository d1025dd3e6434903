//! Flat dense parameter vectors and the handful of kernels every other
//! module shares.
//!
//! Dot products accumulate strictly left to right so that iterate sequences,
//! and therefore benchmark step counts, are bit-for-bit reproducible on a
//! given platform. Problem sizes stay in the tens of parameters, so there is
//! no blocking or SIMD.

use std::ops::Index;

/// Flat vector of 64-bit model or function parameters.
///
/// The length is fixed for the lifetime of a run; binary operations panic if
/// the lengths disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry (0 for the empty vector).
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

impl From<&[f64]> for ParamVector {
    fn from(values: &[f64]) -> Self {
        ParamVector(values.to_vec())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dot product, accumulated left to right in index order.
///
/// Panics if the lengths differ.
pub fn dot(a: &ParamVector, b: &ParamVector) -> f64 {
    assert_eq!(
        a.len(),
        b.len(),
        "dot: length mismatch {} vs {}",
        a.len(),
        b.len()
    );
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Returns `y + alpha * x` elementwise; inputs are not modified.
///
/// Panics if the lengths differ.
pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> ParamVector {
    assert_eq!(
        x.len(),
        y.len(),
        "axpy: length mismatch {} vs {}",
        x.len(),
        y.len()
    );
    ParamVector(
        x.iter()
            .zip(y.iter())
            .map(|(xi, yi)| yi + alpha * xi)
            .collect(),
    )
}

/// Squared Euclidean norm, `dot(a, a)`.
pub fn norm_sq(a: &ParamVector) -> f64 {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dot_hand_values() {
        let a = ParamVector::new(vec![16.0, 1.0]);
        assert_eq!(dot(&a, &a), 257.0);
        let zero = ParamVector::new(vec![0.0, 0.0]);
        let any = ParamVector::new(vec![3.25, -7.5]);
        assert_eq!(dot(&zero, &any), 0.0);
        let one = ParamVector::new(vec![1.0]);
        assert_eq!(dot(&one, &one), 1.0);
    }

    #[test]
    fn norm_sq_hand_values() {
        assert_eq!(norm_sq(&ParamVector::new(vec![16.0, 1.0])), 257.0);
        assert_eq!(norm_sq(&ParamVector::zeros(5)), 0.0);
        assert_eq!(norm_sq(&ParamVector::new(vec![3.0, 4.0])), 25.0);
    }

    #[test]
    fn axpy_hand_values() {
        // one plain gradient step of the steep quadratic from (1, 1)
        let g = ParamVector::new(vec![16.0, 1.0]);
        let p = ParamVector::new(vec![1.0, 1.0]);
        let stepped = axpy(-0.1, &g, &p);
        assert_relative_eq!(stepped[0], -0.6, max_relative = 1e-15);
        assert_relative_eq!(stepped[1], 0.9, max_relative = 1e-15);

        let x = ParamVector::new(vec![1.0, 2.0]);
        assert_eq!(axpy(1.0, &x, &ParamVector::zeros(2)), x);
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn dot_rejects_length_mismatch() {
        dot(&ParamVector::zeros(2), &ParamVector::zeros(3));
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn axpy_rejects_length_mismatch() {
        axpy(1.0, &ParamVector::zeros(2), &ParamVector::zeros(3));
    }

    fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e6f64..1e6, len)
    }

    proptest! {
        #[test]
        fn dot_is_symmetric(a in finite_vec(8), b in finite_vec(8)) {
            let a = ParamVector::new(a);
            let b = ParamVector::new(b);
            prop_assert_eq!(dot(&a, &b).to_bits(), dot(&b, &a).to_bits());
        }

        #[test]
        fn norm_sq_is_nonnegative(a in finite_vec(6)) {
            prop_assert!(norm_sq(&ParamVector::new(a)) >= 0.0);
        }

        #[test]
        fn axpy_zero_alpha_is_identity(x in finite_vec(6), y in finite_vec(6)) {
            let x = ParamVector::new(x);
            let y = ParamVector::new(y);
            let out = axpy(0.0, &x, &y);
            for (o, yi) in out.iter().zip(y.iter()) {
                prop_assert_eq!(o.to_bits(), yi.to_bits());
            }
        }
    }
}
