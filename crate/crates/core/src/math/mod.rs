//! Simplex arithmetic, special functions, the Dirichlet density and divergences.

mod special;

pub(crate) use special::digamma_unchecked;
pub use special::{digamma, log_beta};

use crate::error::{check_dim, Error, Result};

/// Tolerance on Σ p = 1 accepted by [`SimplexVector::new`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Default lower clamp applied by [`renormalize_with_floor`].
pub const DEFAULT_EPS_FLOOR: f64 = 1e-10;

/// A probability vector over K ≥ 2 classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!("a simplex vector needs at least 2 classes, got {}", values.len())));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("component {i} is {v}, expected >= 0")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("components sum to {sum}, expected 1")));
        }
        Ok(SimplexVector(values))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 2, "a simplex vector needs at least 2 classes");
        SimplexVector(vec![1.0 / k as f64; k])
    }

    /// Wraps values already known to lie on the simplex.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.len() >= 2);
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        SimplexVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest component; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Positive concentration vector α of a Dirichlet distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "Dirichlet parameters need at least 2 components, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v <= 0.0) {
            return Err(Error::domain(format!("alpha component {i} is {v}, expected > 0")));
        }
        Ok(DirichletParams(values))
    }

    pub fn ones(k: usize) -> Self {
        DirichletParams(vec![1.0; k])
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| *v > 0.0));
        DirichletParams(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for DirichletParams {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// log Dir(π; α) = −log B(α) + Σ (α_i − 1) log π_i.
///
/// A zero component with α_i = 1 contributes nothing. A zero component with
/// α_i > 1 makes the density vanish and the result is `-inf`; with α_i < 1 the
/// density is unbounded and the IEEE product yields `+inf`.
pub fn dirichlet_log_pdf(pi: &SimplexVector, alpha: &DirichletParams) -> Result<f64> {
    check_dim(alpha.dim(), pi.dim())?;
    let mut acc = -log_beta(alpha);
    for (&p, &a) in pi.as_slice().iter().zip(alpha.as_slice()) {
        if a == 1.0 {
            continue;
        }
        if p == 0.0 && a > 1.0 {
            return Ok(f64::NEG_INFINITY);
        }
        acc += (a - 1.0) * p.ln();
    }
    Ok(acc)
}

/// KL(p‖q) = Σ_{p_j > 0} p_j log(p_j / q_j), with 0·log(0/q) = 0.
///
/// Returns `+inf` when q puts zero mass where p does not.
pub fn kl_divergence(p: &SimplexVector, q: &SimplexVector) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    let mut acc = 0.0;
    for (&pj, &qj) in p.as_slice().iter().zip(q.as_slice()) {
        if pj == 0.0 {
            continue;
        }
        if qj == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += pj * (pj / qj).ln();
    }
    Ok(acc.max(0.0))
}

/// Clamps every component below at `eps_floor` and rescales onto the simplex.
pub fn renormalize_with_floor(v: &[f64], eps_floor: f64) -> Result<SimplexVector> {
    let k = v.len();
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 components, got {k}")));
    }
    if !(eps_floor > 0.0 && eps_floor < 1.0 / k as f64) {
        return Err(Error::invalid(format!(
            "eps_floor must lie in (0, 1/K) = (0, {}), got {eps_floor}",
            1.0 / k as f64
        )));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid("components must be finite and non-negative"));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::invalid("cannot renormalize an all-zero vector"));
    }
    Ok(SimplexVector(floor_and_normalize(v.to_vec(), eps_floor)))
}

/// Shared kernel of [`renormalize_with_floor`] for callers that already
/// validated their input.
pub(crate) fn floor_and_normalize(mut v: Vec<f64>, eps_floor: f64) -> Vec<f64> {
    for x in v.iter_mut() {
        if *x < eps_floor {
            *x = eps_floor;
        }
    }
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
    v
}
