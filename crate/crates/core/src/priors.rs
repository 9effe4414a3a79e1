//! Training and test class-prior scenarios: long-tail counts, shuffled
//! long-tail test priors and Dirichlet-sampled test priors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::math::{floor_and_normalize, DirichletParams, SimplexVector, DEFAULT_EPS_FLOOR};

/// Seedable generator used for every random draw in the crate.
///
/// ChaCha with 8 rounds, seeded through `SeedableRng::seed_from_u64`. Equal
/// seeds give equal streams; nothing is promised across other implementations.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of Monte Carlo trial `index` under `base_seed`.
pub fn trial_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts(Vec<u64>);

impl ClassCounts {
    pub fn new(counts: Vec<u64>) -> Self {
        ClassCounts(counts)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorKind {
    /// Long-tail counts with imbalance ratio `rho`, randomly permuted over classes.
    ShuffledLongTail { rho: f64 },
    /// Test prior drawn from Dir(`alpha`).
    Dirichlet { alpha: DirichletParams },
}

/// A test-prior generator. `n_total` is the head-class size for the shuffled
/// long-tail branch and the sample budget N_t for the Dirichlet branch.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorScenario {
    pub kind: PriorKind,
    pub n_total: u64,
    pub k: usize,
}

impl PriorScenario {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("k must be >= 2, got {}", self.k)));
        }
        if self.n_total < self.k as u64 {
            return Err(Error::invalid(format!("n_total ({}) must be at least k ({})", self.n_total, self.k)));
        }
        match &self.kind {
            PriorKind::ShuffledLongTail { rho } => check_rho(*rho),
            PriorKind::Dirichlet { alpha } if alpha.dim() != self.k => {
                Err(Error::DimensionMismatch { expected: self.k, found: alpha.dim() })
            }
            PriorKind::Dirichlet { .. } => Ok(()),
        }
    }

    /// Draws (counts, true prior) for this scenario.
    pub fn sample(&self, rng: &mut Rng) -> Result<(ClassCounts, SimplexVector)> {
        match self.kind {
            PriorKind::ShuffledLongTail { .. } => shuffled_longtail_prior(self, rng),
            PriorKind::Dirichlet { .. } => dirichlet_prior(self, rng),
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("imbalance ratio rho must lie in (0, 1], got {rho}")))
    }
}

/// counts_i = ⌊n_max · ρ^{i/K}⌋ for i = 0..K, so class 0 holds exactly `n_max`.
pub fn longtail_counts(n_max: u64, rho: f64, k: usize) -> Result<ClassCounts> {
    check_rho(rho)?;
    if n_max < 1 {
        return Err(Error::invalid("n_per_class_max must be >= 1"));
    }
    if k < 2 {
        return Err(Error::invalid(format!("k must be >= 2, got {k}")));
    }
    let counts = (0..k).map(|i| (n_max as f64 * rho.powf(i as f64 / k as f64)).floor() as u64).collect();
    Ok(ClassCounts(counts))
}

pub fn shuffled_longtail_prior(scenario: &PriorScenario, rng: &mut Rng) -> Result<(ClassCounts, SimplexVector)> {
    let PriorKind::ShuffledLongTail { rho } = scenario.kind else {
        return Err(Error::invalid("scenario is not a shuffled long-tail scenario"));
    };
    let mut counts = longtail_counts(scenario.n_total, rho, scenario.k)?;
    counts.0.shuffle(rng);
    let prior = counts_to_prior(&counts)?;
    Ok((counts, prior))
}

/// Samples p ~ Dir(α) by normalizing independent Gamma(α_i, 1) draws and
/// returns ⌊N_t · p⌋ together with p itself.
pub fn dirichlet_prior(scenario: &PriorScenario, rng: &mut Rng) -> Result<(ClassCounts, SimplexVector)> {
    let PriorKind::Dirichlet { alpha } = &scenario.kind else {
        return Err(Error::invalid("scenario is not a Dirichlet scenario"));
    };
    crate::error::check_dim(scenario.k, alpha.dim())?;
    let p = sample_dirichlet(alpha.as_slice(), rng)?;
    let n = scenario.n_total as f64;
    let counts = p.as_slice().iter().map(|&pi| (n * pi).floor() as u64).collect();
    Ok((ClassCounts(counts), p))
}

/// Draws from a Dirichlet whose components may include zeros; a zero shape
/// always yields a zero component.
pub(crate) fn sample_dirichlet(alpha: &[f64], rng: &mut Rng) -> Result<SimplexVector> {
    let gammas = alpha
        .iter()
        .map(|&a| {
            if a == 0.0 {
                Ok(None)
            } else {
                Gamma::new(a, 1.0).map(Some).map_err(|e| Error::domain(format!("Gamma({a}, 1): {e}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    // Very small shapes can underflow every draw to zero; retry a bounded number of times.
    for _ in 0..64 {
        let draws: Vec<f64> = gammas.iter().map(|g| g.as_ref().map_or(0.0, |g| g.sample(rng))).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return Ok(SimplexVector::from_raw(draws.into_iter().map(|x| x / total).collect()));
        }
    }
    Err(Error::numerical("Dirichlet draw underflowed to zero repeatedly"))
}

/// counts / total, floored at the default ε_floor and renormalized.
pub fn counts_to_prior(counts: &ClassCounts) -> Result<SimplexVector> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::invalid("cannot form a prior from all-zero counts"));
    }
    if counts.dim() < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    let ratios = counts.0.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(SimplexVector::from_raw(floor_and_normalize(ratios, DEFAULT_EPS_FLOOR)))
}
