//! Fisher information of the π log-likelihood with the last class eliminated,
//! F = diag(d) + s·𝟙𝟙ᵀ over the first K−1 components, and its inverse.

use crate::error::{check_dim, Error, Result};
use crate::estimators::{EstimatorConfig, OnlineEstimatorState, PosteriorBatch};
use crate::math::{DirichletParams, SimplexVector};

/// (K−1)×(K−1) Fisher information in diagonal-plus-rank-one form.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    /// Diagonal part, one entry per retained class.
    pub d: Vec<f64>,
    /// Coefficient of the all-ones rank-one term contributed by the last class.
    pub s: f64,
    /// Number of classes K.
    pub k: usize,
}

impl FisherMatrix {
    /// Row-major dense (K−1)×(K−1) form.
    pub fn to_dense(&self) -> Vec<f64> {
        let m = self.d.len();
        let mut out = vec![self.s; m * m];
        for (i, &di) in self.d.iter().enumerate() {
            out[i * m + i] += di;
        }
        out
    }
}

/// Dense symmetric (K−1)×(K−1) Cramér–Rao bound, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CrbMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Variance bounds for the first K−1 classes.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }
}

fn fim_from_counts(pi: &SimplexVector, alpha: &DirichletParams, counts: &[f64]) -> Result<FisherMatrix> {
    let k = pi.dim();
    check_dim(k, alpha.dim())?;
    check_dim(k, counts.len())?;
    if let Some(i) = alpha.as_slice().iter().position(|&a| a < 1.0) {
        return Err(Error::numerical(format!(
            "alpha[{i}] = {} < 1: FIM not guaranteed positive; CRB undefined here",
            alpha[i]
        )));
    }
    if let Some(i) = pi.as_slice().iter().position(|&p| !(p > 0.0)) {
        return Err(Error::numerical(format!("pi[{i}] = 0: FIM undefined on the simplex boundary")));
    }
    let entry = |i: usize| (alpha[i] - 1.0 + counts[i]) / (pi[i] * pi[i]);
    Ok(FisherMatrix { d: (0..k - 1).map(entry).collect(), s: entry(k - 1), k })
}

/// Offline FIM with Σ_n f_i^{x_n} taken from the batch column sums.
pub fn fim_offline(pi: &SimplexVector, alpha: &DirichletParams, batch: &PosteriorBatch) -> Result<FisherMatrix> {
    check_dim(pi.dim(), batch.k())?;
    fim_from_counts(pi, alpha, &batch.column_sums())
}

/// Streaming FIM: the data term is (1−γ)δ + γ·mean over the samples seen so far,
/// on a per-sample scale rather than the offline total.
pub fn fim_online(state: &OnlineEstimatorState, cfg: &EstimatorConfig) -> Result<FisherMatrix> {
    if state.tau == 0 {
        return Err(Error::invalid("online FIM needs at least one processed sample"));
    }
    let g = cfg.gamma;
    let counts: Vec<f64> = state
        .pseudo_label_indicator()
        .iter()
        .zip(&state.running_mean_posterior)
        .map(|(delta, mean)| (1.0 - g) * delta + g * mean)
        .collect();
    fim_from_counts(&state.pi, &state.alpha, &counts)
}

/// (diag(d) + s𝟙𝟙ᵀ)⁻¹ = D⁻¹ − s·D⁻¹𝟙𝟙ᵀD⁻¹ / (1 + s·Σ 1/d_i).
pub fn crb_offline(fim: &FisherMatrix) -> Result<CrbMatrix> {
    let m = fim.d.len();
    check_dim(fim.k.saturating_sub(1), m)?;
    if m == 0 {
        return Err(Error::invalid("FIM needs K >= 2"));
    }
    if let Some(i) = fim.d.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::numerical(format!("FIM is singular: d[{i}] = {}", fim.d[i])));
    }
    if !(fim.s >= 0.0 && fim.s.is_finite()) {
        return Err(Error::numerical(format!("FIM is singular: s = {}", fim.s)));
    }
    let inv: Vec<f64> = fim.d.iter().map(|d| 1.0 / d).collect();
    let scale = fim.s / (1.0 + fim.s * inv.iter().sum::<f64>());
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            data[i * m + j] = -scale * inv[i] * inv[j];
        }
        data[i * m + i] += inv[i];
    }
    // Mirror the upper triangle so the result is exactly symmetric.
    for i in 0..m {
        for j in 0..i {
            data[i * m + j] = data[j * m + i];
        }
    }
    Ok(CrbMatrix { dim: m, data })
}

/// Same diagonal-plus-rank-one inversion as [`crb_offline`].
pub fn crb_online(fim: &FisherMatrix) -> Result<CrbMatrix> {
    crb_offline(fim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::rng_from_seed;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn sv(v: &[f64]) -> SimplexVector {
        SimplexVector::new(v.to_vec()).unwrap()
    }

    fn dp(v: &[f64]) -> DirichletParams {
        DirichletParams::new(v.to_vec()).unwrap()
    }

    fn dense_inverse(fim: &FisherMatrix) -> DMatrix<f64> {
        let m = fim.d.len();
        DMatrix::from_row_slice(m, m, &fim.to_dense()).lu().try_inverse().unwrap()
    }

    fn rel_frobenius(crb: &CrbMatrix, oracle: &DMatrix<f64>) -> f64 {
        let m = crb.dim();
        let got = DMatrix::from_row_slice(m, m, crb.as_slice());
        (got - oracle).norm() / oracle.norm()
    }

    fn random_fim(rng: &mut crate::priors::Rng, k: usize) -> FisherMatrix {
        FisherMatrix {
            d: (0..k - 1).map(|_| 10f64.powf(rng.random_range(-2.0..4.0))).collect(),
            s: 10f64.powf(rng.random_range(-2.0..4.0)),
            k,
        }
    }

    #[test]
    fn two_class_hand_case() {
        let batch = PosteriorBatch::from_rows(&[[0.5, 0.5]]).unwrap();
        let fim = fim_offline(&sv(&[0.5, 0.5]), &dp(&[1.0, 1.0]), &batch).unwrap();
        assert_eq!(fim.to_dense(), vec![4.0]);
        let crb = crb_offline(&fim).unwrap();
        assert!((crb.get(0, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn three_class_toy_inverse() {
        let crb = crb_offline(&FisherMatrix { d: vec![1.0, 1.0], s: 1.0, k: 3 }).unwrap();
        let want = [2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0];
        for (a, b) in crb.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn online_hand_case() {
        let mut state = OnlineEstimatorState::new(2);
        state.tau = 1;
        state.prev_pseudo_label = Some(0);
        state.running_mean_posterior = vec![0.5, 0.5];
        let cfg = EstimatorConfig { gamma: 0.5, ..EstimatorConfig::default() };
        let fim = fim_online(&state, &cfg).unwrap();
        assert_eq!(fim.d, vec![3.0]);
        assert_eq!(fim.s, 1.0);
        assert_eq!(fim.to_dense(), vec![4.0]);
        assert!((crb_online(&fim).unwrap().get(0, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn online_gamma_limit_drops_pseudo_label() {
        let mut state = OnlineEstimatorState::new(3);
        state.tau = 4;
        state.prev_pseudo_label = Some(2);
        state.running_mean_posterior = vec![0.2, 0.3, 0.5];
        let cfg = EstimatorConfig { gamma: 1.0 - 1e-15, ..EstimatorConfig::default() };
        let fim = fim_online(&state, &cfg).unwrap();
        let pi = 1.0 / 3.0;
        for (d, m) in fim.d.iter().zip([0.2, 0.3]) {
            assert!((d - m / (pi * pi)).abs() < 1e-12);
        }
        assert!((fim.s - 0.5 / (pi * pi)).abs() < 1e-12);
    }

    #[test]
    fn precondition_errors() {
        let batch = PosteriorBatch::from_rows(&[[0.5, 0.5]]).unwrap();
        let err = fim_offline(&sv(&[0.5, 0.5]), &dp(&[0.5, 1.0]), &batch).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert!(err.to_string().contains("CRB undefined"));
        assert!(fim_offline(&sv(&[1.0, 0.0]), &dp(&[1.0, 1.0]), &batch).is_err());
        assert!(fim_online(&OnlineEstimatorState::new(2), &EstimatorConfig::default()).is_err());
        assert!(crb_offline(&FisherMatrix { d: vec![1.0, 0.0], s: 1.0, k: 3 }).is_err());
    }

    #[test]
    fn sherman_morrison_matches_dense_lu() {
        let mut rng = rng_from_seed(6);
        for k in [2, 5, 10, 50] {
            for _ in 0..20 {
                let fim = random_fim(&mut rng, k);
                let err = rel_frobenius(&crb_offline(&fim).unwrap(), &dense_inverse(&fim));
                assert!(err < 1e-8, "k={k} err={err}");
            }
        }
    }

    #[test]
    fn crb_is_symmetric_positive_definite() {
        let mut rng = rng_from_seed(7);
        for _ in 0..100 {
            let k = rng.random_range(2..20);
            let crb = crb_offline(&random_fim(&mut rng, k)).unwrap();
            let m = crb.dim();
            for i in 0..m {
                for j in 0..m {
                    assert_eq!(crb.get(i, j), crb.get(j, i));
                }
            }
            assert!(DMatrix::from_row_slice(m, m, crb.as_slice()).cholesky().is_some());
        }
    }

    /// L_π with π_K = 1 − Σ_{i<K} π_i, as a function of the free coordinates.
    fn log_lik(free: &[f64], weights: &[f64]) -> f64 {
        let last = 1.0 - free.iter().sum::<f64>();
        free.iter().chain(std::iter::once(&last)).zip(weights).map(|(p, w)| w * p.ln()).sum()
    }

    #[test]
    fn fim_matches_finite_difference_hessian() {
        let mut rng = rng_from_seed(8);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let pi = sv(&raw.iter().map(|x| x / total).collect::<Vec<_>>());
            let alpha = dp(&(0..3).map(|_| rng.random_range(1.0..5.0)).collect::<Vec<_>>());
            let rows: Vec<Vec<f64>> = (0..50)
                .map(|_| {
                    let r: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                    let t: f64 = r.iter().sum();
                    r.iter().map(|x| x / t).collect()
                })
                .collect();
            let batch = PosteriorBatch::from_rows(&rows).unwrap();
            let weights: Vec<f64> =
                batch.column_sums().iter().zip(alpha.as_slice()).map(|(m, a)| a - 1.0 + m).collect();
            let fim = fim_offline(&pi, &alpha, &batch).unwrap().to_dense();

            let x = &pi.as_slice()[..2];
            let h = 1e-4;
            for i in 0..2 {
                for j in 0..2 {
                    let at = |di: f64, dj: f64| {
                        let mut p = x.to_vec();
                        p[i] += di;
                        p[j] += dj;
                        log_lik(&p, &weights)
                    };
                    let hess = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
                    let want = fim[i * 2 + j];
                    assert!((-hess - want).abs() <= 1e-5 * want.abs(), "({i},{j}) {} vs {want}", -hess);
                }
            }
        }
    }

    #[test]
    fn replicating_the_batch_scales_the_data_term() {
        let rows = [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.1, 0.1, 0.8]];
        let batch = PosteriorBatch::from_rows(&rows).unwrap();
        let pi = sv(&[0.3, 0.3, 0.4]);
        let alpha = dp(&[2.0, 3.0, 1.5]);
        let one = fim_offline(&pi, &alpha, &batch).unwrap();
        let ten = fim_offline(&pi, &alpha, &batch.replicate(10)).unwrap();
        let prior = |i: usize| (alpha[i] - 1.0) / (pi[i] * pi[i]);
        for i in 0..2 {
            let want = 10.0 * (one.d[i] - prior(i));
            assert!(((ten.d[i] - prior(i)) - want).abs() < 1e-9 * want);
        }
        assert!(((ten.s - prior(2)) - 10.0 * (one.s - prior(2))).abs() < 1e-9 * ten.s);
        let (c1, c10) = (crb_offline(&one).unwrap(), crb_offline(&ten).unwrap());
        for (a, b) in c1.diagonal().iter().zip(c10.diagonal()) {
            assert!(b < *a);
        }
    }

    proptest! {
        #[test]
        fn crb_times_fim_is_identity(seed in any::<u64>(), k in 2usize..12) {
            let mut rng = rng_from_seed(seed);
            let fim = random_fim(&mut rng, k);
            let crb = crb_offline(&fim).unwrap();
            let m = k - 1;
            let f = DMatrix::from_row_slice(m, m, &fim.to_dense());
            let c = DMatrix::from_row_slice(m, m, crb.as_slice());
            let err = (f * c - DMatrix::<f64>::identity(m, m)).norm();
            prop_assert!(err < 1e-8, "err={}", err);
        }
    }
}
