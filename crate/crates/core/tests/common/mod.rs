//! Reference implementations used as test oracles. Each one is written
//! straight from the textbook definition, independently of the library code.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use oodkit::nn::{Activation, LayerSpec, Mode, Network};
use rand::Rng;

/// AUC by counting every (in, ood) pair.
pub fn brute_auc(in_scores: &[f64], ood_scores: &[f64]) -> f64 {
    let mut total = 0.0;
    for &o in ood_scores {
        for &i in in_scores {
            if o > i {
                total += 1.0;
            } else if o == i {
                total += 0.5;
            }
        }
    }
    total / (in_scores.len() * ood_scores.len()) as f64
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// LOF by the original definitions: k-distance, the k-distance neighborhood
/// (all points within the k-distance), reachability distance, lrd and LOF.
/// Queries are scored against the reference set; reference points never
/// count themselves.
pub fn lof_direct(reference: &[Vec<f64>], k: usize, queries: &[Vec<f64>]) -> Vec<f64> {
    let n = reference.len();
    let neighborhood = |p: &[f64], skip: Option<usize>| -> (f64, Vec<usize>) {
        let mut d: Vec<(f64, usize)> =
            (0..n).filter(|&j| Some(j) != skip).map(|j| (dist(p, &reference[j]), j)).collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let kd = d[k - 1].0;
        (kd, d.iter().filter(|(x, _)| *x <= kd).map(|&(_, j)| j).collect())
    };
    let k_distance: Vec<f64> = (0..n).map(|i| neighborhood(&reference[i], Some(i)).0).collect();
    let lrd = |p: &[f64], nb: &[usize]| -> f64 {
        let s: f64 = nb
            .iter()
            .map(|&o| {
                let r = k_distance[o].max(dist(p, &reference[o]));
                if r == 0.0 {
                    1e-12
                } else {
                    r
                }
            })
            .sum();
        nb.len() as f64 / s
    };
    let ref_lrd: Vec<f64> = (0..n)
        .map(|i| {
            let (_, nb) = neighborhood(&reference[i], Some(i));
            lrd(&reference[i], &nb)
        })
        .collect();
    queries
        .iter()
        .map(|q| {
            let (_, nb) = neighborhood(q, None);
            let own = lrd(q, &nb);
            nb.iter().map(|&o| ref_lrd[o] / own).sum::<f64>() / nb.len() as f64
        })
        .collect()
}

/// Multivariate normal log-density with the (n-1) sample covariance of
/// `train`, via an LU factorization.
pub fn gaussian_log_density(train: &Array2<f64>, x: &Array2<f64>) -> Vec<f64> {
    let (n, d) = train.dim();
    let mean: Vec<f64> = (0..d).map(|j| train.column(j).sum() / n as f64).collect();
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for r in 0..n {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (train[[r, i]] - mean[i]) * (train[[r, j]] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    let lu = cov.clone().lu();
    let det = lu.determinant();
    let inv = lu.try_inverse().expect("invertible covariance");
    x.outer_iter()
        .map(|row| {
            let c = nalgebra::DVector::from_iterator(d, row.iter().zip(&mean).map(|(v, m)| v - m));
            let quad = (c.transpose() * &inv * &c)[(0, 0)];
            -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad)
        })
        .collect()
}

/// Shapley values by averaging marginal contributions over every permutation
/// of the features, with the value of a coalition being the mean of `f` over
/// background rows whose present columns are overwritten by `x`.
pub fn permutation_shapley(
    f: &dyn Fn(&[f64]) -> f64,
    groups: &[std::ops::Range<usize>],
    background: &[Vec<f64>],
    x: &[f64],
) -> Vec<f64> {
    let m = groups.len();
    let value = |present: &[bool]| -> f64 {
        background
            .iter()
            .map(|b| {
                let mut row = b.clone();
                for (g, cols) in groups.iter().enumerate() {
                    if present[g] {
                        for c in cols.clone() {
                            row[c] = x[c];
                        }
                    }
                }
                f(&row)
            })
            .sum::<f64>()
            / background.len() as f64
    };
    let mut perm: Vec<usize> = (0..m).collect();
    let mut phi = vec![0.0; m];
    let mut count = 0usize;
    // Heap's algorithm.
    let mut c = vec![0usize; m];
    let visit = |perm: &[usize], phi: &mut [f64]| {
        let mut present = vec![false; m];
        let mut prev = value(&present);
        for &i in perm {
            present[i] = true;
            let next = value(&present);
            phi[i] += next - prev;
            prev = next;
        }
    };
    visit(&perm, &mut phi);
    count += 1;
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm, &mut phi);
            count += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    phi.iter().map(|p| p / count as f64).collect()
}

/// Outcome of one finite-difference gradient check.
pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
}

/// Relative error used by the gradient checks. Coordinates where both values
/// are below 1e-8 in magnitude are compared absolutely.
pub fn grad_close(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-8 {
        (analytic - numeric).abs() < 1e-10
    } else {
        (analytic - numeric).abs() / scale < 1e-4
    }
}

/// Compares `backward` against central differences (step `h`) of the scalar
/// `sum(forward(x) * r)` for every parameter and input coordinate.
pub fn check_network_gradients(net: &mut Network, x: &Array2<f64>, r: &Array2<f64>, h: f64) -> GradCheck {
    let loss = |net: &Network, x: &Array2<f64>| -> f64 {
        let (y, _) = net.forward(x, Mode::Train).unwrap();
        (&y * r).sum()
    };
    let (_, tape) = net.forward(x, Mode::Train).unwrap();
    let grads = net.backward(&tape, r).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let input_grad = grads.input.clone();

    let mut check = GradCheck { checked: 0, passed: 0 };
    for (si, g) in analytic.iter().enumerate() {
        for k in 0..g.len() {
            net.param_slices_mut()[si][k] += h;
            let plus = loss(net, x);
            net.param_slices_mut()[si][k] -= 2.0 * h;
            let minus = loss(net, x);
            net.param_slices_mut()[si][k] += h;
            check.checked += 1;
            if grad_close(g[k], (plus - minus) / (2.0 * h)) {
                check.passed += 1;
            }
        }
    }
    for idx in 0..x.len() {
        let (i, j) = (idx / x.ncols(), idx % x.ncols());
        let mut xp = x.clone();
        xp[[i, j]] += h;
        let mut xm = x.clone();
        xm[[i, j]] -= h;
        check.checked += 1;
        if grad_close(input_grad[[i, j]], (loss(net, &xp) - loss(net, &xm)) / (2.0 * h)) {
            check.passed += 1;
        }
    }
    check
}

/// A random sequential stack with at most `max_params` parameters. `variant`
/// cycles through plain dense, masked (MADE) and batch-norm stacks.
pub fn random_stack<R: Rng>(rng: &mut R, variant: usize, max_params: usize) -> Network {
    loop {
        let d_in = rng.random_range(2..5);
        let hidden = rng.random_range(3..8);
        let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
        let act = acts[rng.random_range(0..acts.len())];
        let specs = match variant % 3 {
            0 => vec![
                LayerSpec::dense(d_in, hidden, act),
                LayerSpec::dense(hidden, rng.random_range(1..4), Activation::Identity),
            ],
            1 => {
                let masks = oodkit::nn::made_masks(d_in, &[hidden], 2, oodkit::nn::Order::Natural, rng.random());
                vec![
                    LayerSpec::masked(masks[0].clone(), Activation::Tanh),
                    LayerSpec::masked(masks[1].clone(), Activation::Identity),
                ]
            }
            _ => vec![
                LayerSpec::dense(d_in, hidden, act),
                LayerSpec::batch_norm(hidden),
                LayerSpec::dense(hidden, 2, Activation::Tanh),
                LayerSpec::batch_norm(2),
            ],
        };
        let mut net = Network::new(&specs, rng.random()).unwrap();
        if net.n_params() > max_params {
            continue;
        }
        // Move batch-norm scales and offsets away from their identity start.
        for s in net.param_slices_mut() {
            for v in s.iter_mut() {
                if *v == 0.0 {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
        return net;
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.5..1.5))
}

pub fn to_rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn as_array(v: Vec<f64>) -> Array1<f64> {
    Array1::from(v)
}
