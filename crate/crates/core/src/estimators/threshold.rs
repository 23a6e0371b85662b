//! Scalar thresholding rules for identity designs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SCAD_A: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdKind {
    /// `y 1{|y| >= lambda}`.
    Hard,
    /// Lasso on the identity: minimizer of `(y - b)^2 + lambda |b|`.
    Soft,
    /// Minimizer of `(y - b)^2 + p_lambda(|b|)` with the SCAD penalty.
    Scad,
}

/// SCAD penalty `p_lambda(x)` for `x >= 0`, the integral of
/// `lambda 1{x <= lambda} + (a lambda - x)_+ 1{x > lambda} / (a - 1)`.
pub fn scad_penalty(x: f64, lambda: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= lambda {
        lambda * x
    } else if x <= a * lambda {
        lambda * lambda + (a * lambda * (x - lambda) - (x * x - lambda * lambda) / 2.0) / (a - 1.0)
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

fn scad_scalar(y: f64, lambda: f64, a: f64) -> f64 {
    let t = y.abs();
    let obj = |b: f64| (t - b) * (t - b) + scad_penalty(b, lambda, a);
    let inner = (2.0 * (a - 1.0) * t - a * lambda) / (2.0 * a - 3.0);
    let candidates = [
        0.0,
        (t - lambda / 2.0).clamp(0.0, lambda),
        inner.clamp(lambda, a * lambda),
        t.max(a * lambda),
        lambda,
        a * lambda,
    ];
    let mut best = 0.0;
    let mut best_obj = obj(0.0);
    for &b in &candidates[1..] {
        let v = obj(b);
        if v < best_obj || (v == best_obj && b < best) {
            best = b;
            best_obj = v;
        }
    }
    best * y.signum()
}

/// Applies a thresholding rule to one observation.
pub fn scalar_threshold(kind: ThresholdKind, y: f64, lambda: f64, a: Option<f64>) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 || !y.is_finite() {
        return Err(Error::Domain(format!("threshold at y={y}, lambda={lambda}")));
    }
    Ok(match kind {
        ThresholdKind::Hard => {
            if y.abs() >= lambda {
                y
            } else {
                0.0
            }
        }
        ThresholdKind::Soft => {
            let t = y.abs() - lambda / 2.0;
            if t > 0.0 {
                t * y.signum()
            } else {
                0.0
            }
        }
        ThresholdKind::Scad => {
            let a = a.unwrap_or(DEFAULT_SCAD_A);
            if !(a > 2.0) {
                return Err(Error::Domain(format!("SCAD requires a > 2, got {a}")));
            }
            if y == 0.0 {
                0.0
            } else {
                scad_scalar(y, lambda, a)
            }
        }
    })
}

/// Coordinatewise [`scalar_threshold`].
pub fn threshold_vector(kind: ThresholdKind, y: &[f64], lambda: f64, a: Option<f64>) -> Result<Vec<f64>> {
    y.iter().map(|&v| scalar_threshold(kind, v, lambda, a)).collect()
}
