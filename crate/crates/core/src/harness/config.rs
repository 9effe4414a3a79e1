//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! scenario.kind = shuffled_longtail   # or dirichlet
//! scenario.rho = 0.1
//! scenario.k = 10
//! scenario.n_total = 2000
//! classifier.kappa = 8
//! estimator.c = 1e4
//! methods = FMAPLS_LSF, MLLS
//! trials = 100
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{longtail_train_prior, ClassifierSource, DumpClassifier, Method, SyntheticClassifierModel};
use crate::error::{check_dim, Error, Result};
use crate::estimators::EstimatorConfig;
use crate::math::{DirichletParams, SimplexVector};
use crate::priors::{PriorKind, PriorScenario};

pub const DEFAULT_TRIALS: usize = 100;

const KEYS: &[&str] = &[
    "scenario.kind",
    "scenario.rho",
    "scenario.alpha_test",
    "scenario.n_total",
    "scenario.k",
    "classifier.kappa",
    "classifier.eta",
    "classifier.train_rho",
    "classifier.train_prior",
    "classifier.dump",
    "estimator.t_max",
    "estimator.mu",
    "estimator.t_grad",
    "estimator.c",
    "estimator.c_online",
    "estimator.gamma",
    "estimator.alpha_mode",
    "estimator.online_prior",
    "estimator.eps_floor",
    "estimator.q_tol",
    "methods",
    "trials",
    "base_seed",
    "output",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: PriorScenario,
    pub classifier: ClassifierSource,
    pub estimator: EstimatorConfig,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub base_seed: u64,
    pub output: Option<PathBuf>,
}

/// Splits `key = value` lines; `#` starts a comment. Returns (key, value, line).
pub fn parse_key_values(text: &str, source: &Path) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: source.to_path_buf(),
            line: i + 1,
            message: format!("expected `key = value`, found {line:?}"),
        })?;
        out.push((key.trim().to_string(), value.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

impl RunConfig {
    /// Reads a config file, then applies `overrides` (same dotted keys) on top.
    pub fn from_file(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut entries: Vec<(String, String)> =
            parse_key_values(&text, path)?.into_iter().map(|(k, v, _)| (k, v)).collect();
        entries.extend(overrides.iter().cloned());
        Self::from_entries(&entries)
    }

    /// Builds a config from (key, value) pairs; later keys win. Unset keys take defaults.
    pub fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (key, value) in entries {
            let key = KEYS
                .iter()
                .find(|k| **k == key.as_str())
                .ok_or_else(|| Error::invalid(format!("unknown config key {key:?}")))?;
            map.insert(key, value.as_str());
        }
        let get = |key: &str| map.get(key).copied();
        fn or<T: FromStr>(v: Option<&str>, key: &str, default: T) -> Result<T> {
            v.map_or(Ok(default), |v| parse_value(key, v))
        }

        let k: usize = or(get("scenario.k"), "scenario.k", 10)?;
        let n_total: u64 = or(get("scenario.n_total"), "scenario.n_total", 2000)?;
        let kind = match get("scenario.kind").unwrap_or("shuffled_longtail") {
            "shuffled_longtail" => PriorKind::ShuffledLongTail { rho: or(get("scenario.rho"), "scenario.rho", 0.1)? },
            "dirichlet" => {
                let raw = parse_list("scenario.alpha_test", get("scenario.alpha_test").unwrap_or("1"))?;
                let alpha = if raw.len() == 1 { vec![raw[0]; k] } else { raw };
                PriorKind::Dirichlet { alpha: DirichletParams::new(alpha)? }
            }
            other => {
                return Err(Error::invalid(format!(
                    "scenario.kind: unknown {other:?} (expected shuffled_longtail|dirichlet)"
                )))
            }
        };
        let scenario = PriorScenario { kind, n_total, k };

        let eps_train = match get("classifier.train_prior") {
            Some(v) => SimplexVector::new(parse_list("classifier.train_prior", v)?)?,
            None => longtail_train_prior(or(get("classifier.train_rho"), "classifier.train_rho", 1.0)?, k)?,
        };
        let classifier = match get("classifier.dump") {
            Some(path) => ClassifierSource::Dump(DumpClassifier::load(path, eps_train)?),
            None => ClassifierSource::Synthetic(SyntheticClassifierModel::new(
                or(get("classifier.kappa"), "classifier.kappa", 8.0)?,
                or(get("classifier.eta"), "classifier.eta", 1.0)?,
                eps_train,
            )?),
        };

        let d = EstimatorConfig::default();
        let estimator = EstimatorConfig {
            t_max: or(get("estimator.t_max"), "estimator.t_max", d.t_max)?,
            mu: or(get("estimator.mu"), "estimator.mu", d.mu)?,
            t_grad: or(get("estimator.t_grad"), "estimator.t_grad", d.t_grad)?,
            c: or(get("estimator.c"), "estimator.c", d.c)?,
            c_online: or(get("estimator.c_online"), "estimator.c_online", d.c_online)?,
            gamma: or(get("estimator.gamma"), "estimator.gamma", d.gamma)?,
            alpha_mode: or(get("estimator.alpha_mode"), "estimator.alpha_mode", d.alpha_mode)?,
            online_prior: or(get("estimator.online_prior"), "estimator.online_prior", d.online_prior)?,
            eps_floor: or(get("estimator.eps_floor"), "estimator.eps_floor", d.eps_floor)?,
            q_tol: or(get("estimator.q_tol"), "estimator.q_tol", d.q_tol)?,
        };

        let methods = match get("methods") {
            Some(v) => v.split(',').map(str::parse).collect::<Result<Vec<Method>>>()?,
            None => Method::ALL.to_vec(),
        };

        let cfg = RunConfig {
            scenario,
            classifier,
            estimator,
            methods,
            trials: or(get("trials"), "trials", DEFAULT_TRIALS)?,
            base_seed: or(get("base_seed"), "base_seed", 0)?,
            output: get("output").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        check_dim(self.scenario.k, self.classifier.k())?;
        if let ClassifierSource::Synthetic(m) = &self.classifier {
            m.validate()?;
        }
        self.estimator.validate(self.scenario.k)?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        Ok(())
    }

    /// (scenario, rho, alpha_test) report columns; the unused one is empty.
    pub(super) fn scenario_columns(&self) -> (&'static str, String, String) {
        match &self.scenario.kind {
            PriorKind::ShuffledLongTail { rho } => ("shuffled_longtail", rho.to_string(), String::new()),
            PriorKind::Dirichlet { alpha } => {
                let a = alpha.as_slice();
                let text = if a.iter().all(|&x| x == a[0]) {
                    a[0].to_string()
                } else {
                    a.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
                };
                ("dirichlet", String::new(), text)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::AlphaMode;

    fn entries(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::from_entries(&[]).unwrap();
        assert_eq!(cfg.trials, DEFAULT_TRIALS);
        assert_eq!(cfg.scenario.k, 10);
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        assert!(cfg.classifier.eps_train().as_slice().iter().all(|e| (e - 0.1).abs() < 1e-15));
        assert_eq!(cfg.estimator, EstimatorConfig::default());
    }

    #[test]
    fn parses_a_file_with_overrides() {
        let text = "# demo\nscenario.kind = dirichlet\nscenario.alpha_test = 2\nscenario.k = 3\n\
                    scenario.n_total = 50  # small\nestimator.alpha_mode = ga\nmethods = MLLS, FMAPLS_GA\n";
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, text).unwrap();
        let cfg = RunConfig::from_file(&path, &entries(&[("trials", "7"), ("scenario.n_total", "60")])).unwrap();
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.scenario.n_total, 60);
        assert_eq!(cfg.estimator.alpha_mode, AlphaMode::Ga);
        assert_eq!(cfg.methods, vec![Method::Mlls, Method::FmaplsGa]);
        match &cfg.scenario.kind {
            PriorKind::Dirichlet { alpha } => assert_eq!(alpha.as_slice(), &[2.0, 2.0, 2.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn training_prior_options() {
        let cfg = RunConfig::from_entries(&entries(&[("classifier.train_rho", "0.1")])).unwrap();
        let eps = cfg.classifier.eps_train();
        assert!(eps[0] > eps[9]);
        assert!((eps[9] / eps[0] - 0.1f64.powf(0.9)).abs() < 1e-3);
        let cfg =
            RunConfig::from_entries(&entries(&[("scenario.k", "2"), ("classifier.train_prior", "0.3,0.7")])).unwrap();
        assert_eq!(cfg.classifier.eps_train().as_slice(), &[0.3, 0.7]);
    }

    #[test]
    fn rejects_bad_input() {
        for pairs in [
            vec![("scenario.kidn", "dirichlet")],
            vec![("scenario.kind", "uniform")],
            vec![("scenario.rho", "abc")],
            vec![("trials", "0")],
            vec![("methods", "BBSE")],
            vec![("classifier.kappa", "0")],
            vec![("classifier.train_prior", "0.5,0.5")],
            vec![("estimator.gamma", "1.5")],
        ] {
            assert!(RunConfig::from_entries(&entries(&pairs)).is_err(), "{pairs:?}");
        }
        match parse_key_values("a = 1\nnonsense\n", Path::new("x.cfg")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
