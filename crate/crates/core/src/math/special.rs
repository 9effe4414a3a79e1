//! Digamma and log-Beta.

use statrs::function::gamma::ln_gamma;

use super::DirichletParams;
use crate::error::{Error, Result};

/// Below this point the recurrence ψ(x) = ψ(x + 1) − 1/x shifts the argument upward.
const ASYMPTOTIC_CROSSOVER: f64 = 6.0;

/// Digamma function ψ(x) for x > 0.
///
/// Shifts small arguments up to x ≥ 6 with the recurrence, then evaluates the
/// asymptotic series. The series is carried through the x⁻¹⁴ term so the
/// truncation error at the crossover stays near 1e-12.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("digamma requires a finite x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut shift = 0.0;
    while x < ASYMPTOTIC_CROSSOVER {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Horner form of Σ B_2n / (2n x^2n), n = 1..7
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - tail
}

/// log B(α) = Σ log Γ(α_i) − log Γ(Σ α_i), never leaving log space.
pub fn log_beta(alpha: &DirichletParams) -> f64 {
    let values = alpha.as_slice();
    let total: f64 = values.iter().sum();
    values.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(total)
}
