//! Scalar pieces of the two classification losses.
//!
//! Squared sigmoid: `f(x) = (1 - 1/(1 + exp(y a^T x)))^2 = sigma(t)^2` with
//! `t = y a^T x`.
//!
//! Two-class softmax with a nonconvex regularizer: parameters are stacked as
//! `x = (x_1, x_2)` with `x_c` in `R^d`, and
//! `f(x) = -log softmax_y(a^T x_1, a^T x_2) + lambda * sum_c sum_k x_ck^2 / (1 + x_ck^2)`.

use serde::{Deserialize, Serialize};

/// `sup_t |d^2/dt^2 sigma(t)^2|`, attained at `sigma(t) = (15 - sqrt(33)) / 24`.
pub const SQUARED_SIGMOID_CURVATURE: f64 = 0.154_058_570_121_350_5;

/// `sup_t |d/dt sigma(t)^2|`, attained at `sigma(t) = 2/3`.
pub const SQUARED_SIGMOID_SLOPE: f64 = 8.0 / 27.0;

/// Regularization weight used by the stochastic experiments.
pub const DEFAULT_LAMBDA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Loss {
    SquaredSigmoid,
    SoftmaxNonconvexReg { lambda: f64 },
}

impl Loss {
    /// Length of the parameter vector for `d` features.
    pub fn param_dim(&self, features: usize) -> usize {
        match self {
            Loss::SquaredSigmoid => features,
            Loss::SoftmaxNonconvexReg { .. } => 2 * features,
        }
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Value and derivative of `t -> sigma(t)^2`.
pub fn squared_sigmoid(t: f64) -> (f64, f64) {
    let s = sigmoid(t);
    (s * s, 2.0 * s * s * (1.0 - s))
}

/// Second derivative of `t -> sigma(t)^2`.
pub fn squared_sigmoid_second(t: f64) -> f64 {
    let s = sigmoid(t);
    2.0 * s * s * (1.0 - s) * (2.0 - 3.0 * s)
}

/// Cross-entropy of two logits against `class` (0 or 1); returns the loss
/// and `(p_0 - [class = 0], p_1 - [class = 1])`.
pub fn two_class_cross_entropy(z0: f64, z1: f64, class: usize) -> (f64, [f64; 2]) {
    let hi = z0.max(z1);
    let lse = hi + ((z0 - hi).exp() + (z1 - hi).exp()).ln();
    let p = [(z0 - lse).exp(), (z1 - lse).exp()];
    let own = if class == 0 { z0 } else { z1 };
    let mut r = p;
    r[class] -= 1.0;
    (lse - own, r)
}

/// `u -> u^2 / (1 + u^2)` and its derivative.
pub fn nonconvex_reg(u: f64) -> (f64, f64) {
    let q = 1.0 + u * u;
    (u * u / q, 2.0 * u / (q * q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) == 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn squared_sigmoid_derivatives() {
        assert_eq!(squared_sigmoid(0.0), (0.25, 0.25));
        for t in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let d1 = central(|u| squared_sigmoid(u).0, t, 1e-6);
            assert!((d1 - squared_sigmoid(t).1).abs() < 1e-8);
            let d2 = central(|u| squared_sigmoid(u).1, t, 1e-6);
            assert!((d2 - squared_sigmoid_second(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn curvature_constant_matches_grid_search() {
        let mut best: f64 = 0.0;
        let mut slope: f64 = 0.0;
        for i in 0..=400_000 {
            let t = -20.0 + 40.0 * i as f64 / 400_000.0;
            best = best.max(squared_sigmoid_second(t).abs());
            slope = slope.max(squared_sigmoid(t).1.abs());
        }
        assert!(best <= SQUARED_SIGMOID_CURVATURE + 1e-15);
        assert!(SQUARED_SIGMOID_CURVATURE - best < 1e-9);
        assert!(slope <= SQUARED_SIGMOID_SLOPE + 1e-15);
        assert!(SQUARED_SIGMOID_SLOPE - slope < 1e-9);
    }

    #[test]
    fn cross_entropy_handles_large_logits() {
        let (v, r) = two_class_cross_entropy(1000.0, -1000.0, 0);
        assert!(v.abs() < 1e-12);
        assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
        let (v, _) = two_class_cross_entropy(1000.0, -1000.0, 1);
        assert!((v - 2000.0).abs() < 1e-9);
        let (v, r) = two_class_cross_entropy(0.3, 0.3, 1);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn regularizer_derivative() {
        for u in [-2.0, -0.1, 0.0, 0.5, 3.0] {
            let d = central(|v| nonconvex_reg(v).0, u, 1e-6);
            assert!((d - nonconvex_reg(u).1).abs() < 1e-8);
        }
    }
}
