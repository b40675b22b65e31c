use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Check (pinball) loss `ρ_τ(u) = u·(τ − I(u < 0))`.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

/// Default SCAD concavity parameter.
pub const DEFAULT_SCAD_A: f64 = 3.7;

/// Smoothly clipped absolute deviation penalty `p_λ` with shape `a > 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScadPenalty {
    lambda: f64,
    a: f64,
}

impl ScadPenalty {
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("penalty lambda {lambda} must be finite and nonnegative")));
        }
        if !(a > 2.0 && a.is_finite()) {
            return Err(Error::Config(format!("SCAD parameter a = {a} must exceed 2")));
        }
        Ok(Self { lambda, a })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `p_λ(x)` for `x ≥ 0`, the integral of [`Self::derivative`] from 0.
    pub fn value(&self, x: f64) -> f64 {
        let (l, a) = (self.lambda, self.a);
        let x = x.abs();
        if x <= l {
            l * x
        } else if x <= a * l {
            -(x * x - 2.0 * a * l * x + l * l) / (2.0 * (a - 1.0))
        } else {
            (a + 1.0) * l * l / 2.0
        }
    }

    /// `ṗ_λ(x) = λ{I(x ≤ λ) + (aλ − x)₊/((a − 1)λ)·I(x > λ)}`.
    pub fn derivative(&self, x: f64) -> f64 {
        let (l, a) = (self.lambda, self.a);
        let x = x.abs();
        if x <= l {
            l
        } else {
            (a * l - x).max(0.0) / (a - 1.0)
        }
    }
}

pub fn scad_value(x: f64, pen: &ScadPenalty) -> f64 {
    pen.value(x)
}

pub fn scad_derivative(x: f64, pen: &ScadPenalty) -> f64 {
    pen.derivative(x)
}
