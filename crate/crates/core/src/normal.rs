//! Standard normal helpers.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn pdf(x: f64) -> f64 {
    standard().pdf(x)
}

pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// Two-sided critical value `z_{1 - γ/2}`.
pub fn two_sided_critical(gamma: f64) -> f64 {
    quantile(1.0 - 0.5 * gamma)
}
