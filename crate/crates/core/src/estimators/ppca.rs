//! Probabilistic PCA fitted in closed form.
//!
//! With sample covariance `S = U diag(l) U^T` (eigenvalues descending), the
//! maximum-likelihood solution is `sigma^2 = mean(l[q..])` and
//! `W = U_q (diag(l[..q]) - sigma^2 I)^{1/2}`; the model density is
//! `N(mu, W W^T + sigma^2 I)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::EstimatorError;

/// Relative floor on the isotropic noise variance, as a fraction of trace(S)/d.
pub const NOISE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PpcaModel {
    pub mean: Array1<f64>,
    /// `d x q` loading matrix.
    pub loading: Array2<f64>,
    pub noise_var: f64,
    precision: Array2<f64>,
    log_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct PpcaParams {
    mean: Vec<f64>,
    q: usize,
    /// Row-major `d x q`.
    loading: Vec<f64>,
    noise_var: f64,
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Sample mean and (n-1)-denominator covariance, symmetrized.
pub fn sample_covariance(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = x.nrows() as f64;
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / (n - 1.0);
    let sym = (&cov + &cov.t()) / 2.0;
    (mean, sym)
}

/// Fits PPCA with `q` components. `q == d` is accepted here and reproduces
/// the full-covariance Gaussian; the estimator front end requires `q < d`.
pub fn ppca_closed_form(train: &Array2<f64>, q: usize) -> Result<PpcaModel, EstimatorError> {
    let (n, d) = train.dim();
    if n < 2 {
        return Err(EstimatorError::Fit(format!("PPCA needs at least 2 rows, got {n}")));
    }
    if q < 1 || q > d {
        return Err(EstimatorError::Config(format!("PPCA needs 1 <= q <= d, got q = {q}, d = {d}")));
    }
    let (mean, cov) = sample_covariance(train);
    let eig = SymmetricEigen::new(to_nalgebra(&cov));
    let mut pairs: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..d).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let largest = pairs[0].0.abs().max(f64::MIN_POSITIVE);
    if pairs.iter().any(|(l, _)| !l.is_finite() || *l < -1e-8 * largest.max(1.0)) {
        return Err(EstimatorError::Linalg("sample covariance is not positive semi-definite".into()));
    }
    let lambdas: Vec<f64> = pairs.iter().map(|(l, _)| l.max(0.0)).collect();
    let trace: f64 = lambdas.iter().sum();
    let floor = NOISE_FLOOR * trace / d as f64;
    let tail = if q < d { lambdas[q..].iter().sum::<f64>() / (d - q) as f64 } else { 0.0 };
    let noise_var = tail.max(floor).max(f64::MIN_POSITIVE);

    let mut loading = Array2::zeros((d, q));
    for (c, &(lambda, idx)) in pairs.iter().take(q).enumerate() {
        let scale = (lambda.max(0.0) - noise_var).max(0.0).sqrt();
        for r in 0..d {
            loading[[r, c]] = eig.eigenvectors[(r, idx)] * scale;
        }
    }
    PpcaModel::from_parts(mean, loading, noise_var)
}

impl PpcaModel {
    pub fn from_parts(mean: Array1<f64>, loading: Array2<f64>, noise_var: f64) -> Result<Self, EstimatorError> {
        let d = mean.len();
        if loading.nrows() != d || !(noise_var > 0.0) {
            return Err(EstimatorError::Format("inconsistent PPCA parameters".into()));
        }
        let cov = loading.dot(&loading.t()) + Array2::<f64>::eye(d) * noise_var;
        let chol = to_nalgebra(&cov)
            .cholesky()
            .ok_or_else(|| EstimatorError::Linalg("model covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        let precision = Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (inv[(i, j)] + inv[(j, i)]));
        Ok(Self { mean, loading, noise_var, precision, log_det })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.loading.ncols()
    }

    /// Model covariance `W W^T + sigma^2 I`.
    pub fn covariance(&self) -> Array2<f64> {
        self.loading.dot(&self.loading.t()) + Array2::<f64>::eye(self.dim()) * self.noise_var
    }

    /// Per-row Gaussian log-density.
    pub fn log_likelihood(&self, x: &Array2<f64>) -> Array1<f64> {
        let d = self.dim() as f64;
        let centered = x - &self.mean;
        let quad = (&centered.dot(&self.precision) * &centered).sum_axis(Axis(1));
        quad.mapv(|m| -0.5 * (d * (2.0 * PI).ln() + self.log_det + m))
    }

    pub(crate) fn params(&self) -> PpcaParams {
        PpcaParams {
            mean: self.mean.to_vec(),
            q: self.n_components(),
            loading: self.loading.iter().copied().collect(),
            noise_var: self.noise_var,
        }
    }

    pub(crate) fn from_params(p: &PpcaParams) -> Result<Self, EstimatorError> {
        let loading = Array2::from_shape_vec((p.mean.len(), p.q), p.loading.clone())
            .map_err(|_| EstimatorError::Format("PPCA loading has the wrong length".into()))?;
        Self::from_parts(Array1::from(p.mean.clone()), loading, p.noise_var)
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::seeded_rng;

    #[test]
    fn isotropic_covariance_gives_zero_loading() {
        // Rows +-e_i: sample covariance is exactly (2/3) I.
        let x = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let m = ppca_closed_form(&x, 1).unwrap();
        let lambda = 2.0 / 3.0;
        assert!((m.noise_var - lambda).abs() < 1e-12);
        assert!(m.loading.iter().all(|v| v.abs() < 1e-7));
        let ll = m.log_likelihood(&array![[0.0, 0.0]])[0];
        let iso = -(2.0 * PI).ln() - lambda.ln();
        assert!((ll - iso).abs() < 1e-9);
    }

    #[test]
    fn peak_density_for_standard_normal_data() {
        let mut rng = seeded_rng(3);
        let x = Array2::from_shape_fn((20_000, 2), |_| StandardNormal.sample(&mut rng));
        let m = ppca_closed_form(&x, 1).unwrap();
        let nll = -m.log_likelihood(&m.mean.clone().insert_axis(Axis(0)))[0];
        // (d/2) ln(2 pi) = ln(2 pi) for d = 2
        assert!((nll - 1.837_877_066).abs() < 0.02, "{nll}");
    }

    #[test]
    fn collinear_data_is_floored() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| (i as f64) * if j == 0 { 1.0 } else { 2.0 });
        let m = ppca_closed_form(&x, 1).unwrap();
        let (_, cov) = sample_covariance(&x);
        let floor = NOISE_FLOOR * (cov[[0, 0]] + cov[[1, 1]]) / 2.0;
        assert!((m.noise_var - floor).abs() < 1e-9 * floor.max(1.0));
        assert!(m.log_likelihood(&x).iter().all(|v| v.is_finite()));
        assert!(m.log_likelihood(&array![[100.0, -100.0]])[0].is_finite());
    }

    #[test]
    fn rejects_bad_q() {
        let x = Array2::from_shape_fn((10, 3), |(i, j)| (i * j) as f64 + (i as f64).sin());
        assert!(ppca_closed_form(&x, 0).is_err());
        assert!(ppca_closed_form(&x, 4).is_err());
        assert!(ppca_closed_form(&x.slice(ndarray::s![..1, ..]).to_owned(), 1).is_err());
    }
}
