//! Seeded Monte Carlo experiments: synthetic calibrated classifiers or
//! resampled posterior dumps, every estimator run on the same draws, and
//! CSV reports.

mod config;
mod dump;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rayon::prelude::*;

pub use config::{parse_key_values, RunConfig, DEFAULT_TRIALS};
pub use dump::{
    load_posterior_dump, read_posterior_dump, write_dump, write_dump_to, DumpReader, DumpRow, DUMP_SUM_TOL,
};

use crate::error::{check_dim, Error, Result};
use crate::estimators::{
    fmapls_with_reference, mlls_with_reference, online_fmapls_with_reference, prior_ratio, AlphaMode, EstimateReport,
    EstimatorConfig, PosteriorBatch,
};
use crate::math::{argmax, kl_divergence, SimplexVector};
use crate::priors::{counts_to_prior, longtail_counts, rng_from_seed, sample_dirichlet, trial_seed, Rng};

/// Head-class size used to turn a training imbalance ratio into a training prior.
pub const TRAIN_HEAD_COUNT: u64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FmaplsGa,
    FmaplsLsf,
    OnlineFmapls,
    Mlls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::FmaplsGa, Method::FmaplsLsf, Method::OnlineFmapls, Method::Mlls];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::FmaplsGa => "FMAPLS_GA",
            Method::FmaplsLsf => "FMAPLS_LSF",
            Method::OnlineFmapls => "OnlineFMAPLS",
            Method::Mlls => "MLLS",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "FMAPLS_GA" => Ok(Method::FmaplsGa),
            "FMAPLS_LSF" => Ok(Method::FmaplsLsf),
            "ONLINEFMAPLS" | "ONLINE_FMAPLS" => Ok(Method::OnlineFmapls),
            "MLLS" => Ok(Method::Mlls),
            _ => Err(Error::invalid(format!("unknown method {s:?} (expected FMAPLS_GA|FMAPLS_LSF|OnlineFMAPLS|MLLS)"))),
        }
    }
}

/// A classifier that is exactly calibrated to `eps_train`.
///
/// A latent x ~ Dir(κ at the true class, η elsewhere) depends on the label
/// only; the emitted output is the Bayes posterior of the label given x under
/// the training prior, ∝ ε_j · x_j^(κ−η).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClassifierModel {
    pub kappa: f64,
    pub eta: f64,
    pub eps_train: SimplexVector,
}

impl SyntheticClassifierModel {
    pub fn new(kappa: f64, eta: f64, eps_train: SimplexVector) -> Result<Self> {
        let model = SyntheticClassifierModel { kappa, eta, eps_train };
        model.validate()?;
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.eps_train.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.eps_train.as_slice().iter().any(|&e| !(e > 0.0)) {
            return Err(Error::invalid("training prior must be strictly positive"));
        }
        Ok(())
    }
}

/// Training prior with long-tail imbalance ratio `rho`, head class first.
pub fn longtail_train_prior(rho: f64, k: usize) -> Result<SimplexVector> {
    counts_to_prior(&longtail_counts(TRAIN_HEAD_COUNT, rho, k)?)
}

/// One classifier output for a sample whose true class is `true_label`.
pub fn synth_sample(model: &SyntheticClassifierModel, true_label: usize, rng: &mut Rng) -> Result<SimplexVector> {
    let k = model.k();
    if !(model.kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be > 0, got {}", model.kappa)));
    }
    if !(model.eta >= 0.0) {
        return Err(Error::invalid(format!("eta must be >= 0, got {}", model.eta)));
    }
    if true_label >= k {
        return Err(Error::invalid(format!("label {true_label} out of range for {k} classes")));
    }
    let shapes: Vec<f64> = (0..k).map(|j| if j == true_label { model.kappa } else { model.eta }).collect();
    let x = sample_dirichlet(&shapes, rng)?;
    let power = model.kappa - model.eta;
    let log_w: Vec<f64> = (0..k)
        .map(|j| {
            if shapes[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                model.eps_train[j].ln() + power * x[j].max(f64::MIN_POSITIVE).ln()
            }
        })
        .collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(SimplexVector::from_raw(w.into_iter().map(|v| v / total).collect()))
}

/// Labelled posterior dump resampled per class.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpClassifier {
    pub path: PathBuf,
    pub eps_train: SimplexVector,
    batch: PosteriorBatch,
    by_class: Vec<Vec<usize>>,
}

impl DumpClassifier {
    pub fn load(path: impl AsRef<Path>, eps_train: SimplexVector) -> Result<Self> {
        let path = path.as_ref();
        let (batch, labels) = load_posterior_dump(path)?;
        let labels = labels.ok_or_else(|| {
            Error::invalid(format!("{}: resampling needs a labelled dump (labels=true)", path.display()))
        })?;
        Self::from_parts(path.to_path_buf(), batch, &labels, eps_train)
    }

    pub fn from_parts(
        path: PathBuf,
        batch: PosteriorBatch,
        labels: &[usize],
        eps_train: SimplexVector,
    ) -> Result<Self> {
        check_dim(batch.k(), eps_train.dim())?;
        check_dim(batch.n(), labels.len())?;
        let mut by_class = vec![Vec::new(); batch.k()];
        for (i, &y) in labels.iter().enumerate() {
            by_class.get_mut(y).ok_or_else(|| Error::invalid(format!("row {i}: label {y} out of range")))?.push(i);
        }
        Ok(DumpClassifier { path, eps_train, batch, by_class })
    }

    pub fn k(&self) -> usize {
        self.batch.k()
    }

    fn sample(&self, label: usize, rng: &mut Rng) -> Result<&[f64]> {
        let rows = &self.by_class[label];
        if rows.is_empty() {
            return Err(Error::invalid(format!("{}: no rows labelled {label}", self.path.display())));
        }
        Ok(self.batch.row(rows[rng.random_range(0..rows.len())]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSource {
    Synthetic(SyntheticClassifierModel),
    Dump(DumpClassifier),
}

impl ClassifierSource {
    pub fn eps_train(&self) -> &SimplexVector {
        match self {
            ClassifierSource::Synthetic(m) => &m.eps_train,
            ClassifierSource::Dump(d) => &d.eps_train,
        }
    }

    pub fn k(&self) -> usize {
        self.eps_train().dim()
    }
}

/// The draws shared by every method in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub pi_true: SimplexVector,
    pub labels: Vec<usize>,
    pub batch: PosteriorBatch,
}

/// Samples the true prior, N labels from it and one classifier output per label.
pub fn trial_data(cfg: &RunConfig, trial_index: usize) -> Result<TrialData> {
    let mut rng = rng_from_seed(trial_seed(cfg.base_seed, trial_index));
    let (_, pi_true) = cfg.scenario.sample(&mut rng)?;
    let n = cfg.scenario.n_total as usize;
    let k = cfg.scenario.k;
    let picker = WeightedIndex::new(pi_true.as_slice())
        .map_err(|e| Error::numerical(format!("cannot sample labels from the true prior: {e}")))?;
    let labels: Vec<usize> = (0..n).map(|_| picker.sample(&mut rng)).collect();
    let mut data = Vec::with_capacity(n * k);
    for &y in &labels {
        match &cfg.classifier {
            ClassifierSource::Synthetic(model) => data.extend_from_slice(synth_sample(model, y, &mut rng)?.as_slice()),
            ClassifierSource::Dump(dump) => data.extend_from_slice(dump.sample(y, &mut rng)?),
        }
    }
    Ok(TrialData { pi_true, labels, batch: PosteriorBatch::from_flat(k, data)? })
}

/// Runs one estimator; with a reference prior the report carries its KL trace.
pub fn run_method(
    method: Method,
    batch: &PosteriorBatch,
    eps_train: &SimplexVector,
    cfg: &EstimatorConfig,
    reference: Option<&SimplexVector>,
) -> Result<EstimateReport> {
    match method {
        Method::FmaplsGa => {
            let cfg = EstimatorConfig { alpha_mode: AlphaMode::Ga, ..cfg.clone() };
            fmapls_with_reference(batch, eps_train, &cfg, reference)
        }
        Method::FmaplsLsf => {
            let cfg = EstimatorConfig { alpha_mode: AlphaMode::Lsf, ..cfg.clone() };
            fmapls_with_reference(batch, eps_train, &cfg, reference)
        }
        Method::OnlineFmapls => online_fmapls_with_reference(batch.rows(), eps_train, cfg, reference),
        Method::Mlls => mlls_with_reference(batch, eps_train, cfg.t_max, reference),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub method: Method,
    /// KL(π_true ‖ π*).
    pub kl: f64,
    /// Accuracy of argmax after reweighting to π*.
    pub post_shift_accuracy: f64,
    /// Accuracy of the raw classifier argmax.
    pub pre_shift_accuracy: f64,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
}

fn accuracy<'a>(rows: impl Iterator<Item = &'a [f64]>, weights: Option<&[f64]>, labels: &[usize]) -> f64 {
    let mut scratch = Vec::new();
    let hits = rows
        .zip(labels)
        .filter(|(row, &y)| {
            let pred = match weights {
                Some(w) => {
                    scratch.clear();
                    scratch.extend(row.iter().zip(w).map(|(f, w)| f * w));
                    argmax(&scratch)
                }
                None => argmax(row),
            };
            pred == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Every configured method on the draws of trial `trial_index`, in `cfg.methods` order.
pub fn run_trial(cfg: &RunConfig, trial_index: usize) -> Result<Vec<TrialResult>> {
    let data = trial_data(cfg, trial_index)?;
    let eps = cfg.classifier.eps_train();
    let pre = accuracy(data.batch.rows(), None, &data.labels);
    cfg.methods
        .iter()
        .map(|&method| {
            let report = run_method(method, &data.batch, eps, &cfg.estimator, None)?;
            let weights = prior_ratio(&report.pi, eps)?;
            Ok(TrialResult {
                method,
                kl: kl_divergence(&data.pi_true, &report.pi)?,
                post_shift_accuracy: accuracy(data.batch.rows(), Some(&weights), &data.labels),
                pre_shift_accuracy: pre,
                iterations: report.iterations,
                wall_time: report.elapsed.as_secs_f64(),
            })
        })
        .collect()
}

/// Per-method aggregate over all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_kl: f64,
    pub std_kl: f64,
    /// Post-shift accuracy.
    pub mean_acc: f64,
    pub std_acc: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub summaries: Vec<MethodSummary>,
    /// Per-trial results indexed by trial, each in `methods` order.
    pub trials: Vec<Vec<TrialResult>>,
}

pub const REPORT_HEADER: &str = "method,scenario,k,n_total,rho,alpha_test,mean_kl,std_kl,mean_acc,std_acc,trials";

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ExperimentReport {
    fn aggregate(methods: &[Method], trials: Vec<Vec<TrialResult>>) -> Self {
        let summaries = methods
            .iter()
            .enumerate()
            .map(|(m, &method)| {
                let kl: Vec<f64> = trials.iter().map(|t| t[m].kl).collect();
                let acc: Vec<f64> = trials.iter().map(|t| t[m].post_shift_accuracy).collect();
                let (mean_kl, std_kl) = mean_std(&kl);
                let (mean_acc, std_acc) = mean_std(&acc);
                MethodSummary { method, mean_kl, std_kl, mean_acc, std_acc, trials: trials.len() }
            })
            .collect();
        ExperimentReport { summaries, trials }
    }

    /// CSV with [`REPORT_HEADER`]; byte-identical for identical configs.
    pub fn write_csv<W: Write>(&self, out: &mut W, cfg: &RunConfig) -> Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        let (scenario, rho, alpha) = cfg.scenario_columns();
        for s in &self.summaries {
            writeln!(
                out,
                "{},{scenario},{},{},{rho},{alpha},{},{},{},{},{}",
                s.method, cfg.scenario.k, cfg.scenario.n_total, s.mean_kl, s.std_kl, s.mean_acc, s.std_acc, s.trials
            )?;
        }
        Ok(())
    }
}

/// Runs `cfg.trials` trials in parallel, reduces them in trial order and
/// writes the CSV report to `cfg.output` when set.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let trials = (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, i)).collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport::aggregate(&cfg.methods, trials);
    if let Some(path) = &cfg.output {
        let mut buf = Vec::new();
        report.write_csv(&mut buf, cfg)?;
        std::fs::write(path, buf)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    }
    Ok(report)
}

/// KL(π_true ‖ π^(t)) for t = 0, 1, …: per iteration for batch methods, per
/// sample for the streaming one. The first entry is the uniform start.
pub fn trace_kl(cfg: &RunConfig, trial_index: usize, method: Method) -> Result<Vec<(usize, f64)>> {
    let data = trial_data(cfg, trial_index)?;
    let report = run_method(method, &data.batch, cfg.classifier.eps_train(), &cfg.estimator, Some(&data.pi_true))?;
    let trace = report.kl_trace.expect("reference supplied");
    Ok(trace.into_iter().enumerate().collect())
}

pub fn write_trace_csv<W: Write>(out: &mut W, trace: &[(usize, f64)]) -> Result<()> {
    writeln!(out, "iteration,kl")?;
    for (t, kl) in trace {
        writeln!(out, "{t},{kl}")?;
    }
    Ok(())
}
