//! Standard normal helpers.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

pub fn pdf(x: f64) -> f64 {
    standard().pdf(x)
}

pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// Φ⁻¹; returns ∓∞ at 0 and 1.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        standard().inverse_cdf(p)
    }
}
