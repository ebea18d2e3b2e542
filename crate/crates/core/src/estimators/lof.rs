//! Local outlier factor in novelty mode: the reference set's k-distances and
//! local reachability densities are computed once at fit time, and query
//! points are scored against the reference set only.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use super::EstimatorError;

/// Reachability distances of exactly zero are replaced by this before inversion.
pub const MIN_REACH_DIST: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LofModel {
    reference: Array2<f64>,
    k: usize,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The `k` nearest reference rows to `point` as `(distance, index)`, ordered by
/// distance with ties broken by index. `exclude` drops one reference row.
fn nearest(reference: &Array2<f64>, point: ArrayView1<f64>, k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = reference
        .outer_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, r)| (euclidean(point, r), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

impl LofModel {
    pub fn fit(reference: &Array2<f64>, k: usize) -> Result<Self, EstimatorError> {
        let n = reference.nrows();
        if k < 1 {
            return Err(EstimatorError::Config("LOF needs k >= 1".into()));
        }
        if k >= n {
            return Err(EstimatorError::Config(format!("LOF needs k < n_train, got k = {k}, n_train = {n}")));
        }
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::Fit("LOF reference set contains non-finite values".into()));
        }
        let neighbors: Vec<Vec<(f64, usize)>> =
            (0..n).into_par_iter().map(|i| nearest(reference, reference.row(i), k, Some(i))).collect();
        let k_distance: Vec<f64> = neighbors.iter().map(|nb| nb[k - 1].0).collect();
        let lrd = neighbors.iter().map(|nb| local_density(nb, &k_distance)).collect();
        Ok(Self { reference: reference.to_owned(), k, k_distance, lrd })
    }

    pub(crate) fn from_parts(reference: Array2<f64>, k: usize) -> Result<Self, EstimatorError> {
        Self::fit(&reference, k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn reference(&self) -> &Array2<f64> {
        &self.reference
    }

    pub fn score(&self, x: &Array2<f64>) -> Array1<f64> {
        let scores: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let nb = nearest(&self.reference, x.row(i), self.k, None);
                let own = local_density(&nb, &self.k_distance);
                nb.iter().map(|&(_, j)| self.lrd[j] / own).sum::<f64>() / nb.len() as f64
            })
            .collect();
        Array1::from(scores)
    }
}

fn local_density(neighbors: &[(f64, usize)], k_distance: &[f64]) -> f64 {
    let mean_reach = neighbors
        .iter()
        .map(|&(d, j)| {
            let r = d.max(k_distance[j]);
            if r == 0.0 {
                MIN_REACH_DIST
            } else {
                r
            }
        })
        .sum::<f64>()
        / neighbors.len() as f64;
    1.0 / mean_reach.max(MIN_REACH_DIST)
}

/// Scores `x` against `reference` with `k` neighbors.
pub fn lof_score(reference: &Array2<f64>, k: usize, x: &Array2<f64>) -> Result<Array1<f64>, EstimatorError> {
    Ok(LofModel::fit(reference, k)?.score(x))
}
