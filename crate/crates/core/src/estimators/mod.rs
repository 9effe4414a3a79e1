//! Test-prior estimators: Bayes reweighting, batch EM with a dynamic Dirichlet
//! prior (GA or LSF hyperparameter updates), the MLLS baseline and the
//! streaming variant.

mod batch;
mod config;
mod online;

use std::time::Duration;

pub use batch::{
    alpha_grad_residual, alpha_update_ga, alpha_update_lsf, fmapls, fmapls_with_reference, mlls, mlls_with_reference,
    pi_update_batch, q_function, BatchEstimatorState, StepOutcome,
};
pub use config::{AlphaMode, EstimatorConfig, OnlinePrior};
pub use online::{online_fmapls, online_fmapls_with_reference, online_step, OnlineEstimatorState};

use crate::error::{check_dim, Error, Result};
use crate::math::{DirichletParams, SimplexVector, SIMPLEX_TOL};

/// N × K row-stochastic matrix of classifier soft outputs, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBatch {
    k: usize,
    data: Vec<f64>,
}

impl PosteriorBatch {
    /// Builds a batch from rows that must each lie on the simplex.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::invalid("empty posterior batch"))?;
        let k = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            validate_row(row, k).map_err(|e| Error::invalid(format!("row {i}: {e}")))?;
            data.extend_from_slice(row);
        }
        Ok(PosteriorBatch { k, data })
    }

    /// Wraps a flat row-major buffer, validating every row.
    pub fn from_flat(k: usize, data: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("k must be >= 2, got {k}")));
        }
        if data.is_empty() || !data.len().is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "buffer of {} values is not a non-empty multiple of k = {k}",
                data.len()
            )));
        }
        for (i, row) in data.chunks_exact(k).enumerate() {
            validate_row(row, k).map_err(|e| Error::invalid(format!("row {i}: {e}")))?;
        }
        Ok(PosteriorBatch { k, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k)
    }

    /// Per-class column sums Σ_n f^{x_n}.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for row in self.rows() {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    /// The batch repeated `times` times end to end.
    pub fn replicate(&self, times: usize) -> Self {
        PosteriorBatch { k: self.k, data: self.data.repeat(times) }
    }
}

pub(crate) fn validate_row(row: &[f64], k: usize) -> Result<()> {
    check_dim(k, row.len())?;
    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("probabilities must be finite and non-negative"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("row sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Result of a batch or streaming estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub pi: SimplexVector,
    pub alpha: DirichletParams,
    /// Q-value at the end of each batch iteration; empty for streaming runs.
    pub q_trace: Vec<f64>,
    /// KL(reference ‖ π) at initialization and after every iteration or sample,
    /// present when a reference prior was supplied.
    pub kl_trace: Option<Vec<f64>>,
    /// Batch iterations run, or samples consumed when streaming.
    pub iterations: usize,
    pub elapsed: Duration,
}

/// Bayes correction of one training-domain posterior to the test prior π:
/// r_j ∝ (π_j / ε_j) f_j.
pub fn reweight_posterior(f: &SimplexVector, pi: &SimplexVector, eps_train: &SimplexVector) -> Result<SimplexVector> {
    check_dim(pi.dim(), f.dim())?;
    check_dim(pi.dim(), eps_train.dim())?;
    let weights = prior_ratio(pi, eps_train)?;
    let mut out = vec![0.0; f.dim()];
    reweight_into(f.as_slice(), &weights, &mut out)?;
    Ok(SimplexVector::from_raw(out))
}

/// π_j / ε_j, rejecting a training prior with empty classes.
pub(crate) fn prior_ratio(pi: &SimplexVector, eps_train: &SimplexVector) -> Result<Vec<f64>> {
    if let Some(j) = eps_train.as_slice().iter().position(|&e| !(e > 0.0)) {
        return Err(Error::invalid(format!("training prior component {j} must be > 0")));
    }
    Ok(pi.as_slice().iter().zip(eps_train.as_slice()).map(|(p, e)| p / e).collect())
}

pub(crate) fn reweight_into(f: &[f64], weights: &[f64], out: &mut [f64]) -> Result<()> {
    let mut total = 0.0;
    for ((o, &fj), &w) in out.iter_mut().zip(f).zip(weights) {
        *o = w * fj;
        total += *o;
    }
    if !(total > 0.0) {
        return Err(Error::numerical("posterior has no support under the current prior estimate"));
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}
