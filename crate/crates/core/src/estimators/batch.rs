use std::time::Instant;

use super::{prior_ratio, reweight_into, AlphaMode, EstimateReport, EstimatorConfig, PosteriorBatch};
use crate::error::{check_dim, Error, Result};
use crate::math::{
    digamma_unchecked, floor_and_normalize, kl_divergence, log_beta, DirichletParams, SimplexVector, DEFAULT_EPS_FLOOR,
};

/// Lower clamp for α components after a gradient step.
const ALPHA_MIN: f64 = 1e-6;

/// Current θ = (π, α) of the batch estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEstimatorState {
    pub pi: SimplexVector,
    pub alpha: DirichletParams,
    pub iteration: usize,
    /// Q-value at the end of each completed iteration.
    pub trace: Vec<f64>,
}

/// Q-values seen during one EM iteration, all anchored at the responsibilities
/// of the incoming state θ^(t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Q(π^(t), α^(t))
    pub q_start: f64,
    /// Q(π^(t+1), α^(t)), after the closed-form π step.
    pub q_after_pi: f64,
    /// Q(π^(t+1), α^(t+1))
    pub q_end: f64,
}

impl BatchEstimatorState {
    /// π = 1/K, α = 1.
    pub fn new(k: usize) -> Self {
        BatchEstimatorState {
            pi: SimplexVector::uniform(k),
            alpha: DirichletParams::ones(k),
            iteration: 0,
            trace: Vec::new(),
        }
    }

    /// One E-step followed by the π and α M-steps.
    pub fn step(
        &mut self,
        batch: &PosteriorBatch,
        eps_train: &SimplexVector,
        cfg: &EstimatorConfig,
    ) -> Result<StepOutcome> {
        let expected = expected_counts(batch, &self.pi, eps_train)?;
        let q_start = q_value(&self.pi, &self.alpha, &expected);

        let pi_next = m_step_pi(&self.alpha, &expected, cfg.eps_floor)?;
        let q_after_pi = q_value(&pi_next, &self.alpha, &expected);

        let alpha_next = match cfg.alpha_mode {
            AlphaMode::Ga => alpha_update_ga(&self.alpha, &pi_next, cfg.mu, cfg.t_grad),
            AlphaMode::Lsf => alpha_update_lsf(&pi_next, cfg.c),
            AlphaMode::Frozen => self.alpha.clone(),
        };
        let q_end = q_value(&pi_next, &alpha_next, &expected);

        self.pi = pi_next;
        self.alpha = alpha_next;
        self.iteration += 1;
        self.trace.push(q_end);
        Ok(StepOutcome { q_start, q_after_pi, q_end })
    }
}

/// Σ_i r_ij: reweighted posteriors under `pi`, summed over the batch.
pub(crate) fn expected_counts(
    batch: &PosteriorBatch,
    pi: &SimplexVector,
    eps_train: &SimplexVector,
) -> Result<Vec<f64>> {
    let k = batch.k();
    check_dim(k, pi.dim())?;
    check_dim(k, eps_train.dim())?;
    let weights = prior_ratio(pi, eps_train)?;
    let mut sums = vec![0.0; k];
    let mut r = vec![0.0; k];
    for (i, row) in batch.rows().enumerate() {
        reweight_into(row, &weights, &mut r).map_err(|e| Error::numerical(format!("row {i}: {e}")))?;
        for (s, &v) in sums.iter_mut().zip(&r) {
            *s += v;
        }
    }
    Ok(sums)
}

/// −log B(α) + Σ_j (α_j − 1 + R_j) log π_j, with 0 · log 0 taken as 0.
fn q_value(pi: &SimplexVector, alpha: &DirichletParams, expected: &[f64]) -> f64 {
    let mut acc = -log_beta(alpha);
    for ((&p, &a), &r) in pi.as_slice().iter().zip(alpha.as_slice()).zip(expected) {
        let coeff = (a - 1.0) + r;
        if coeff != 0.0 {
            acc += coeff * p.ln();
        }
    }
    acc
}

/// Closed-form maximizer of the π-part of Q, numerators clamped at zero.
fn m_step_pi(alpha: &DirichletParams, expected: &[f64], eps_floor: f64) -> Result<SimplexVector> {
    let numerators: Vec<f64> = alpha.as_slice().iter().zip(expected).map(|(&a, &r)| ((a - 1.0) + r).max(0.0)).collect();
    normalize_then_floor(numerators, eps_floor)
}

fn normalize_then_floor(mut v: Vec<f64>, eps_floor: f64) -> Result<SimplexVector> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::numerical("every π numerator is non-positive"));
    }
    for x in v.iter_mut() {
        *x /= total;
    }
    Ok(SimplexVector::from_raw(floor_and_normalize(v, eps_floor)))
}

/// Expected complete-data log-posterior Q(θ; θ_t), dropping terms that do not
/// depend on θ. Only differences of Q are meaningful.
pub fn q_function(
    theta: (&SimplexVector, &DirichletParams),
    pi_t: &SimplexVector,
    batch: &PosteriorBatch,
    eps_train: &SimplexVector,
) -> Result<f64> {
    let (pi, alpha) = theta;
    check_dim(batch.k(), pi.dim())?;
    check_dim(batch.k(), alpha.dim())?;
    let expected = expected_counts(batch, pi_t, eps_train)?;
    Ok(q_value(pi, alpha, &expected))
}

/// π^(t+1)_j ∝ α_j − 1 + Σ_i r_ij, then floored at the default ε_floor.
pub fn pi_update_batch(
    state: &BatchEstimatorState,
    batch: &PosteriorBatch,
    eps_train: &SimplexVector,
) -> Result<SimplexVector> {
    check_dim(batch.k(), state.alpha.dim())?;
    let expected = expected_counts(batch, &state.pi, eps_train)?;
    m_step_pi(&state.alpha, &expected, DEFAULT_EPS_FLOOR)
}

/// `t_grad` steps of α_j ← α_j + μ[ψ(Σα) − ψ(α_j) + log π_j], clamped at 1e-6.
pub fn alpha_update_ga(alpha: &DirichletParams, pi_next: &SimplexVector, mu: f64, t_grad: usize) -> DirichletParams {
    let mut a = alpha.as_slice().to_vec();
    let log_pi: Vec<f64> = pi_next.as_slice().iter().map(|p| p.ln()).collect();
    for _ in 0..t_grad {
        let psi_total = digamma_unchecked(a.iter().sum());
        for (aj, lp) in a.iter_mut().zip(&log_pi) {
            let grad = psi_total - digamma_unchecked(*aj) + lp;
            *aj = (*aj + mu * grad).max(ALPHA_MIN);
        }
    }
    DirichletParams::from_raw(a)
}

/// α_j = (c / max π) π_j. The largest component equals `c` exactly.
pub fn alpha_update_lsf(pi_next: &SimplexVector, c: f64) -> DirichletParams {
    let max = pi_next.max();
    let alpha = pi_next.as_slice().iter().map(|&p| c * (p / max)).collect::<Vec<_>>();
    // floored π keeps every component positive
    DirichletParams::from_raw(alpha.into_iter().map(|a| a.max(f64::MIN_POSITIVE)).collect())
}

/// Gradient of the α-objective evaluated at the LSF point:
/// ψ(ĉ) − ψ(ĉ π_j) + log π_j with ĉ = c / max π.
pub fn alpha_grad_residual(pi: &SimplexVector, c: f64) -> Result<Vec<f64>> {
    if !(c > pi.dim() as f64) {
        return Err(Error::invalid(format!("c must exceed K = {}, got {c}", pi.dim())));
    }
    if pi.as_slice().iter().any(|&p| p <= 0.0) {
        return Err(Error::domain("residual needs every π component > 0"));
    }
    let c_hat = c / pi.max();
    let psi_c = digamma_unchecked(c_hat);
    Ok(pi.as_slice().iter().map(|&p| psi_c - digamma_unchecked(c_hat * p) + p.ln()).collect())
}

pub fn fmapls(batch: &PosteriorBatch, eps_train: &SimplexVector, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    fmapls_with_reference(batch, eps_train, cfg, None)
}

/// Batch EM from π = 1/K, α = 1. When `reference` is given the report carries
/// KL(reference ‖ π^(t)) for t = 0..=iterations.
pub fn fmapls_with_reference(
    batch: &PosteriorBatch,
    eps_train: &SimplexVector,
    cfg: &EstimatorConfig,
    reference: Option<&SimplexVector>,
) -> Result<EstimateReport> {
    let k = batch.k();
    cfg.validate(k)?;
    check_dim(k, eps_train.dim())?;
    let started = Instant::now();
    let mut state = BatchEstimatorState::new(k);
    let mut kl_trace = reference.map(|r| kl_divergence(r, &state.pi).map(|d| vec![d])).transpose()?;

    for _ in 0..cfg.t_max {
        let outcome = state.step(batch, eps_train, cfg)?;
        if let (Some(trace), Some(r)) = (kl_trace.as_mut(), reference) {
            trace.push(kl_divergence(r, &state.pi)?);
        }
        if cfg.q_tol > 0.0 && (outcome.q_end - outcome.q_start).abs() < cfg.q_tol {
            break;
        }
    }

    Ok(EstimateReport {
        pi: state.pi,
        alpha: state.alpha,
        q_trace: state.trace,
        kl_trace,
        iterations: state.iteration,
        elapsed: started.elapsed(),
    })
}

/// Classic label-shift EM: π^(t+1) is the mean of the reweighted rows.
/// Runs exactly `t_max` iterations.
pub fn mlls(batch: &PosteriorBatch, eps_train: &SimplexVector, t_max: usize) -> Result<EstimateReport> {
    mlls_with_reference(batch, eps_train, t_max, None)
}

pub fn mlls_with_reference(
    batch: &PosteriorBatch,
    eps_train: &SimplexVector,
    t_max: usize,
    reference: Option<&SimplexVector>,
) -> Result<EstimateReport> {
    let k = batch.k();
    check_dim(k, eps_train.dim())?;
    let started = Instant::now();
    let ones = DirichletParams::ones(k);
    let mut pi = SimplexVector::uniform(k);
    let mut q_trace = Vec::with_capacity(t_max);
    let mut kl_trace = reference.map(|r| kl_divergence(r, &pi).map(|d| vec![d])).transpose()?;

    for _ in 0..t_max {
        let expected = expected_counts(batch, &pi, eps_train)?;
        pi = normalize_then_floor(expected.clone(), DEFAULT_EPS_FLOOR)?;
        q_trace.push(q_value(&pi, &ones, &expected));
        if let (Some(trace), Some(r)) = (kl_trace.as_mut(), reference) {
            trace.push(kl_divergence(r, &pi)?);
        }
    }

    Ok(EstimateReport { pi, alpha: ones, q_trace, kl_trace, iterations: t_max, elapsed: started.elapsed() })
}
