use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::math::DEFAULT_EPS_FLOOR;

/// How the batch estimator refreshes the Dirichlet hyperparameters after each π step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// `t_grad` gradient-ascent steps on the α-objective.
    Ga,
    /// Closed-form linear surrogate α = (c / max π) π.
    Lsf,
    /// α stays at its initial all-ones value (reduces to MLLS).
    Frozen,
}

impl fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaMode::Ga => "ga",
            AlphaMode::Lsf => "lsf",
            AlphaMode::Frozen => "frozen",
        })
    }
}

impl FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ga" => Ok(AlphaMode::Ga),
            "lsf" => Ok(AlphaMode::Lsf),
            "frozen" => Ok(AlphaMode::Frozen),
            other => Err(Error::invalid(format!("unknown alpha mode {other:?} (expected ga|lsf|frozen)"))),
        }
    }
}

/// Which prior term enters the numerator of the streaming π update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlinePrior {
    /// α_i (1 − K / Σα): the K units of mode correction are shared in
    /// proportion to α, so the prior alone leaves π unchanged.
    Proportional,
    /// α_i − 1, the recursion taken literally. With α = ĉπ the uniform point
    /// is repelling and π collapses onto one class; kept for comparison.
    Literal,
}

impl fmt::Display for OnlinePrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OnlinePrior::Proportional => "proportional",
            OnlinePrior::Literal => "literal",
        })
    }
}

impl FromStr for OnlinePrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proportional" => Ok(OnlinePrior::Proportional),
            "literal" => Ok(OnlinePrior::Literal),
            other => Err(Error::invalid(format!("unknown online prior {other:?} (expected proportional|literal)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Maximum number of batch EM iterations.
    pub t_max: usize,
    /// Gradient-ascent learning rate for [`AlphaMode::Ga`].
    pub mu: f64,
    /// Inner gradient-ascent iterations per EM iteration.
    pub t_grad: usize,
    /// LSF constant of the batch estimator.
    pub c: f64,
    /// LSF constant of the streaming estimator. Sets the step size, roughly
    /// max(π) / c per sample.
    pub c_online: f64,
    /// Streaming confidence weight between the pseudo-label and the reweighted posterior.
    pub gamma: f64,
    pub alpha_mode: AlphaMode,
    pub online_prior: OnlinePrior,
    pub eps_floor: f64,
    /// Stop once an iteration changes Q by less than this; 0 runs all `t_max` iterations.
    pub q_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            t_max: 100,
            mu: 0.05,
            t_grad: 20,
            c: 1e4,
            c_online: 1e2,
            gamma: 0.95,
            alpha_mode: AlphaMode::Lsf,
            online_prior: OnlinePrior::Proportional,
            eps_floor: DEFAULT_EPS_FLOOR,
            q_tol: 1e-8,
        }
    }
}

impl EstimatorConfig {
    /// Checks the tunables against a K-class problem.
    pub fn validate(&self, k: usize) -> Result<()> {
        let kf = k as f64;
        if self.t_max == 0 {
            return Err(Error::invalid("t_max must be >= 1"));
        }
        if !(self.c > kf) {
            return Err(Error::invalid(format!("c must exceed K = {k}, got {}", self.c)));
        }
        if !(self.c_online > kf) {
            return Err(Error::invalid(format!("c_online must exceed K = {k}, got {}", self.c_online)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::invalid(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.eps_floor > 0.0 && self.eps_floor < 1.0 / kf) {
            return Err(Error::invalid(format!("eps_floor must lie in (0, 1/K), got {}", self.eps_floor)));
        }
        if !(self.q_tol >= 0.0) {
            return Err(Error::invalid(format!("q_tol must be >= 0, got {}", self.q_tol)));
        }
        Ok(())
    }
}
