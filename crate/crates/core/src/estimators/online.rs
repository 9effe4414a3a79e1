use std::time::Instant;

use super::batch::alpha_update_lsf;
use super::{prior_ratio, reweight_into, validate_row, EstimateReport, EstimatorConfig, OnlinePrior};
use crate::error::{check_dim, Error, Result};
use crate::math::{argmax, floor_and_normalize, kl_divergence, DirichletParams, SimplexVector};

/// State of the streaming estimator after τ samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineEstimatorState {
    pub pi: SimplexVector,
    pub alpha: DirichletParams,
    /// Samples processed so far.
    pub tau: usize,
    /// Argmax of the previous sample's reweighted posterior; `None` before the first sample.
    pub prev_pseudo_label: Option<usize>,
    /// Mean of the raw classifier outputs seen so far (uniform before any sample).
    pub running_mean_posterior: Vec<f64>,
    scratch: Vec<f64>,
}

impl OnlineEstimatorState {
    /// π = 1/K, α = 1, no samples seen.
    pub fn new(k: usize) -> Self {
        OnlineEstimatorState {
            pi: SimplexVector::uniform(k),
            alpha: DirichletParams::ones(k),
            tau: 0,
            prev_pseudo_label: None,
            running_mean_posterior: vec![1.0 / k as f64; k],
            scratch: vec![0.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.pi.dim()
    }

    /// Indicator of the current pseudo-label, or the uniform vector before any sample.
    pub fn pseudo_label_indicator(&self) -> Vec<f64> {
        let k = self.k();
        match self.prev_pseudo_label {
            Some(y) => (0..k).map(|i| if i == y { 1.0 } else { 0.0 }).collect(),
            None => vec![1.0 / k as f64; k],
        }
    }

    /// Consumes one classifier output. O(K) time, no allocation beyond the new π and α.
    pub fn step(&mut self, f_new: &[f64], eps_train: &SimplexVector, cfg: &EstimatorConfig) -> Result<()> {
        let k = self.k();
        validate_row(f_new, k)?;
        check_dim(k, eps_train.dim())?;
        let gamma = cfg.gamma;

        // Reweighted posterior of the incoming sample under the current π.
        let weights = prior_ratio(&self.pi, eps_train)?;
        let mut r = std::mem::take(&mut self.scratch);
        reweight_into(f_new, &weights, &mut r)?;

        let alpha = self.alpha.as_slice();
        let mode_share = match cfg.online_prior {
            OnlinePrior::Proportional => 1.0 - k as f64 / self.alpha.sum(),
            OnlinePrior::Literal => 0.0,
        };
        let uniform = 1.0 / k as f64;
        let mut numerators = Vec::with_capacity(k);
        for i in 0..k {
            let delta = match self.prev_pseudo_label {
                Some(y) if y == i => 1.0,
                Some(_) => 0.0,
                None => uniform,
            };
            let prior = match cfg.online_prior {
                OnlinePrior::Proportional => alpha[i] * mode_share,
                OnlinePrior::Literal => alpha[i] - 1.0,
            };
            numerators.push((prior + (1.0 - gamma) * delta + gamma * r[i]).max(0.0));
        }
        let total: f64 = numerators.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            self.scratch = r;
            return Err(Error::numerical("every streaming π numerator is non-positive"));
        }
        for x in numerators.iter_mut() {
            *x /= total;
        }
        self.pi = SimplexVector::from_raw(floor_and_normalize(numerators, cfg.eps_floor));
        self.alpha = alpha_update_lsf(&self.pi, cfg.c_online);
        self.prev_pseudo_label = Some(argmax(&r));

        self.tau += 1;
        let n = self.tau as f64;
        if self.tau == 1 {
            self.running_mean_posterior.copy_from_slice(f_new);
        } else {
            for (m, &f) in self.running_mean_posterior.iter_mut().zip(f_new) {
                *m += (f - *m) / n;
            }
        }
        self.scratch = r;
        Ok(())
    }
}

/// Functional form of [`OnlineEstimatorState::step`].
pub fn online_step(
    mut state: OnlineEstimatorState,
    f_new: &SimplexVector,
    eps_train: &SimplexVector,
    cfg: &EstimatorConfig,
) -> Result<OnlineEstimatorState> {
    state.step(f_new.as_slice(), eps_train, cfg)?;
    Ok(state)
}

pub fn online_fmapls<I, R>(stream: I, eps_train: &SimplexVector, cfg: &EstimatorConfig) -> Result<EstimateReport>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    online_fmapls_with_reference(stream, eps_train, cfg, None)
}

/// Folds [`OnlineEstimatorState::step`] over the stream. With a reference prior
/// the report carries KL(reference ‖ π) before the first sample and after each one.
pub fn online_fmapls_with_reference<I, R>(
    stream: I,
    eps_train: &SimplexVector,
    cfg: &EstimatorConfig,
    reference: Option<&SimplexVector>,
) -> Result<EstimateReport>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let k = eps_train.dim();
    cfg.validate(k)?;
    if let Some(r) = reference {
        check_dim(k, r.dim())?;
    }
    let started = Instant::now();
    let mut state = OnlineEstimatorState::new(k);
    let mut kl_trace = reference.map(|r| kl_divergence(r, &state.pi).map(|d| vec![d])).transpose()?;

    for (i, row) in stream.into_iter().enumerate() {
        state.step(row.as_ref(), eps_train, cfg).map_err(|e| match e {
            Error::InvalidInput(m) => Error::invalid(format!("sample {i}: {m}")),
            other => other,
        })?;
        if let (Some(trace), Some(r)) = (kl_trace.as_mut(), reference) {
            trace.push(kl_divergence(r, &state.pi)?);
        }
    }
    if state.tau == 0 {
        return Err(Error::invalid("empty stream"));
    }

    Ok(EstimateReport {
        pi: state.pi,
        alpha: state.alpha,
        q_trace: Vec::new(),
        kl_trace,
        iterations: state.tau,
        elapsed: started.elapsed(),
    })
}
