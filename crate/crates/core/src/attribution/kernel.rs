//! KernelSHAP over groups of encoded columns.
//!
//! A coalition `z` over `M` raw features is evaluated as the mean score of
//! `x` with the absent features replaced by each background row. Shapley
//! values are the weighted least-squares fit of `v(z) ~ phi_0 + sum_{i in z} phi_i`
//! under the Shapley kernel, constrained so that `phi_0 + sum phi = f(x)`.

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;

use super::AttributionError;
use crate::estimators::EstimatorError;
use crate::seeded_rng;

/// Background rows used for marginal imputation are capped at this many.
pub const MAX_BACKGROUND: usize = 100;

/// Coalition budget when none is given: `2M + 2048`.
pub fn default_coalitions(n_features: usize) -> usize {
    2 * n_features + 2048
}

/// Shapley values for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapValues {
    /// Mean score over the background.
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// Score of the explained row.
    pub target: f64,
}

/// Shapley kernel weight of a coalition of size `s` out of `m`.
pub fn shapley_kernel(m: usize, s: usize) -> f64 {
    if s == 0 || s == m {
        return f64::INFINITY;
    }
    (m - 1) as f64 / (binomial(m, s) * (s * (m - s)) as f64)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Seeded subsample of at most [`MAX_BACKGROUND`] rows.
pub fn cap_background(background: &Array2<f64>, seed: u64) -> Array2<f64> {
    if background.nrows() <= MAX_BACKGROUND {
        return background.to_owned();
    }
    let mut rng = seeded_rng(seed);
    let mut idx = sample(&mut rng, background.nrows(), MAX_BACKGROUND).into_vec();
    idx.sort_unstable();
    background.select(Axis(0), &idx)
}

/// Coalitions (as membership masks) with regression weights, excluding the
/// empty and full coalitions.
fn coalitions(m: usize, budget: usize, seed: u64) -> Vec<(Vec<bool>, f64)> {
    let total = 1u128 << m.min(127);
    if m < 64 && (budget as u128) + 2 >= total {
        return (1..(1u64 << m) - 1)
            .map(|bits| {
                let mask: Vec<bool> = (0..m).map(|i| bits >> i & 1 == 1).collect();
                let s = mask.iter().filter(|&&b| b).count();
                (mask, shapley_kernel(m, s))
            })
            .collect();
    }
    // Sample sizes in proportion to their total kernel mass, then a uniform
    // subset of that size, always paired with its complement.
    let size_mass: Vec<f64> = (1..m).map(|s| shapley_kernel(m, s) * binomial(m, s)).collect();
    let mass_total: f64 = size_mass.iter().sum();
    let mut rng = seeded_rng(seed);
    let mut counts: HashMap<Vec<bool>, f64> = HashMap::new();
    let mut order: Vec<Vec<bool>> = Vec::new();
    let mut add = |mask: Vec<bool>, order: &mut Vec<Vec<bool>>| {
        let entry = counts.entry(mask.clone()).or_insert_with(|| {
            order.push(mask);
            0.0
        });
        *entry += 1.0;
    };
    for _ in 0..budget.div_ceil(2) {
        let mut u = rng.random::<f64>() * mass_total;
        let mut s = m - 1;
        for (i, w) in size_mass.iter().enumerate() {
            if u < *w {
                s = i + 1;
                break;
            }
            u -= w;
        }
        let members = sample(&mut rng, m, s);
        let mut mask = vec![false; m];
        for i in members.iter() {
            mask[i] = true;
        }
        let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
        add(mask, &mut order);
        add(complement, &mut order);
    }
    order.into_iter().map(|mask| {
        let w = counts[&mask];
        (mask, w)
    }).collect()
}

/// Mean score over the background for each coalition, batching rows.
fn coalition_values<F>(
    score_fn: &F,
    groups: &[Range<usize>],
    background: &Array2<f64>,
    x: &[f64],
    masks: &[&[bool]],
) -> Result<Vec<f64>, EstimatorError>
where
    F: Fn(&Array2<f64>) -> Result<Array1<f64>, EstimatorError>,
{
    let nb = background.nrows();
    let per_chunk = (20_000 / nb).max(1);
    let mut out = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(per_chunk) {
        let mut batch = Array2::zeros((chunk.len() * nb, background.ncols()));
        for (c, mask) in chunk.iter().enumerate() {
            let mut block = batch.slice_mut(ndarray::s![c * nb..(c + 1) * nb, ..]);
            block.assign(background);
            for (g, cols) in groups.iter().enumerate() {
                if mask[g] {
                    for j in cols.clone() {
                        block.column_mut(j).fill(x[j]);
                    }
                }
            }
        }
        let scores = score_fn(&batch)?;
        for c in 0..chunk.len() {
            out.push(scores.slice(ndarray::s![c * nb..(c + 1) * nb]).mean().expect("non-empty background"));
        }
    }
    Ok(out)
}

/// KernelSHAP attribution of `score_fn` at `x` over the column groups `groups`
/// (one group per raw feature). `background` is capped to [`MAX_BACKGROUND`]
/// rows by the caller or here; when `n_coalitions + 2 >= 2^M` all coalitions
/// are enumerated and the result is exact.
pub fn kernel_shap<F>(
    score_fn: &F,
    groups: &[Range<usize>],
    background: &Array2<f64>,
    x: &[f64],
    n_coalitions: usize,
    seed: u64,
) -> Result<ShapValues, AttributionError>
where
    F: Fn(&Array2<f64>) -> Result<Array1<f64>, EstimatorError>,
{
    let m = groups.len();
    if m == 0 {
        return Err(AttributionError::Config("no features to attribute".into()));
    }
    if background.nrows() == 0 {
        return Err(AttributionError::Config("background set is empty".into()));
    }
    if x.len() != background.ncols() {
        return Err(AttributionError::Config(format!(
            "row has {} columns, background has {}",
            x.len(),
            background.ncols()
        )));
    }
    if n_coalitions < 2 * m + 2 && m > 1 {
        return Err(AttributionError::Config(format!(
            "n_coalitions must be at least 2M + 2 = {}, got {n_coalitions}",
            2 * m + 2
        )));
    }
    let background = cap_background(background, seed ^ 0x6267);
    let base_value = score_fn(&background)?.mean().expect("non-empty background");
    let target = score_fn(&Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape"))?[0];
    if !base_value.is_finite() || !target.is_finite() {
        return Err(AttributionError::NonFinite("score of the row or background is not finite".into()));
    }
    let gap = target - base_value;
    if m == 1 {
        return Ok(ShapValues { base_value, phi: vec![gap], target });
    }

    let sampled = coalitions(m, n_coalitions, seed);
    let masks: Vec<&[bool]> = sampled.iter().map(|(mask, _)| mask.as_slice()).collect();
    let values = coalition_values(score_fn, groups, &background, x, &masks)?;

    // Substitute phi_{M-1} = gap - sum_{i<M-1} phi_i and solve the reduced
    // weighted normal equations.
    let k = m - 1;
    let mut xtwx = DMatrix::<f64>::zeros(k, k);
    let mut xtwy = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for ((mask, w), v) in sampled.iter().zip(&values) {
        let last = if mask[k] { 1.0 } else { 0.0 };
        for i in 0..k {
            row[i] = (if mask[i] { 1.0 } else { 0.0 }) - last;
        }
        let y = v - base_value - last * gap;
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            xtwy[i] += w * row[i] * y;
            for j in 0..k {
                xtwx[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    let singular = || {
        AttributionError::Singular(format!(
            "coalition regression is singular with {} distinct coalitions; increase n_coalitions",
            sampled.len()
        ))
    };
    let beta = xtwx.clone().cholesky().map(|c| c.solve(&xtwy)).ok_or_else(singular)?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(singular());
    }
    let mut phi: Vec<f64> = beta.iter().copied().collect();
    phi.push(gap - phi.iter().sum::<f64>());
    Ok(ShapValues { base_value, phi, target })
}

/// Classical Shapley values by enumerating every coalition with the same
/// marginal-imputation value function. Exponential in `groups.len()`.
pub fn exact_shapley<F>(
    score_fn: &F,
    groups: &[Range<usize>],
    background: &Array2<f64>,
    x: &[f64],
) -> Result<ShapValues, AttributionError>
where
    F: Fn(&Array2<f64>) -> Result<Array1<f64>, EstimatorError>,
{
    let m = groups.len();
    if m == 0 || m > 20 {
        return Err(AttributionError::Config("exact Shapley values need 1 to 20 features".into()));
    }
    let masks: Vec<Vec<bool>> = (0..1u64 << m).map(|bits| (0..m).map(|i| bits >> i & 1 == 1).collect()).collect();
    let refs: Vec<&[bool]> = masks.iter().map(Vec::as_slice).collect();
    let values = coalition_values(score_fn, groups, background, x, &refs)?;
    let mf = |n: usize| (1..=n).fold(1.0, |acc, v| acc * v as f64);
    let mut phi = vec![0.0; m];
    for (bits, v) in values.iter().enumerate() {
        for (i, p) in phi.iter_mut().enumerate() {
            if bits >> i & 1 == 1 {
                continue;
            }
            let s = (bits as u64).count_ones() as usize;
            let weight = mf(s) * mf(m - s - 1) / mf(m);
            *p += weight * (values[bits | 1 << i] - v);
        }
    }
    Ok(ShapValues { base_value: values[0], phi, target: values[(1 << m) - 1] })
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn singles(m: usize) -> Vec<Range<usize>> {
        (0..m).map(|i| i..i + 1).collect()
    }

    #[test]
    fn kernel_weights() {
        assert!((shapley_kernel(4, 1) - 3.0 / (4.0 * 3.0)).abs() < 1e-15);
        assert!((shapley_kernel(4, 2) - 3.0 / (6.0 * 4.0)).abs() < 1e-15);
        assert_eq!(binomial(6, 3), 20.0);
        assert!(shapley_kernel(3, 0).is_infinite());
    }

    #[test]
    fn linear_function_closed_form() {
        let w = [2.0, -1.0, 0.5];
        let f = |x: &Array2<f64>| Ok(x.dot(&Array1::from(w.to_vec())));
        let bg = array![[0.0, 1.0, 2.0], [2.0, 3.0, 0.0], [1.0, -1.0, 1.0]];
        let x = [3.0, 0.0, -2.0];
        let r = kernel_shap(&f, &singles(3), &bg, &x, 100, 0).unwrap();
        let means = bg.mean_axis(Axis(0)).unwrap();
        for i in 0..3 {
            assert!((r.phi[i] - w[i] * (x[i] - means[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn too_small_budget_is_rejected() {
        let f = |x: &Array2<f64>| Ok(x.sum_axis(Axis(1)));
        let bg = array![[0.0, 0.0, 0.0]];
        assert!(matches!(kernel_shap(&f, &singles(3), &bg, &[1.0, 1.0, 1.0], 7, 0), Err(AttributionError::Config(_))));
    }

    #[test]
    fn grouped_columns_move_together() {
        // Columns 1..3 form one feature; the function reads both.
        let f = |x: &Array2<f64>| Ok(x.column(0).to_owned() + &(&x.column(1) * &x.column(2)));
        let bg = array![[0.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let x = [2.0, 1.0, 1.0];
        let groups = vec![0..1, 1..3];
        let r = kernel_shap(&f, &groups, &bg, &x, 100, 0).unwrap();
        let e = exact_shapley(&f, &groups, &bg, &x).unwrap();
        assert!((r.phi[1] - e.phi[1]).abs() < 1e-12);
        assert!((r.phi[1] - 1.0).abs() < 1e-12);
    }
}
