use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seeded_rng;

/// Autoregressive ordering of the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Input `i` has degree `i + 1`.
    Natural,
    /// Input `i` has degree `D - i`.
    Reversed,
}

pub fn input_degrees(in_dim: usize, order: Order) -> Vec<usize> {
    match order {
        Order::Natural => (1..=in_dim).collect(),
        Order::Reversed => (1..=in_dim).rev().collect(),
    }
}

/// Hidden-unit degrees cycle through `1..D-1`; the seed shuffles which unit
/// gets which degree. With a single input every hidden unit has degree 0 and
/// therefore sees no input.
fn hidden_degrees(in_dim: usize, width: usize, rng: &mut crate::SeededRng) -> Vec<usize> {
    if in_dim < 2 {
        return vec![0; width];
    }
    let mut deg: Vec<usize> = (0..width).map(|k| 1 + k % (in_dim - 1)).collect();
    deg.shuffle(rng);
    deg
}

/// Degree-based MADE masks for a conditioner `in_dim -> hidden... -> out_multiplier * in_dim`.
///
/// Masks are `out x in`. Output unit `h * in_dim + i` (head `h`, feature `i`)
/// depends only on inputs whose degree is strictly below feature `i`'s degree.
pub fn made_masks(in_dim: usize, hidden_dims: &[usize], out_multiplier: usize, order: Order, seed: u64) -> Vec<Array2<f64>> {
    assert!(in_dim >= 1 && out_multiplier >= 1 && hidden_dims.iter().all(|&h| h >= 1), "dims must be >= 1");
    let mut rng = seeded_rng(seed);
    let in_deg = input_degrees(in_dim, order);
    let mut prev = in_deg.clone();
    let mut masks = Vec::with_capacity(hidden_dims.len() + 1);
    for &width in hidden_dims {
        let deg = hidden_degrees(in_dim, width, &mut rng);
        masks.push(Array2::from_shape_fn((width, prev.len()), |(k, j)| f64::from(u8::from(deg[k] >= prev[j]))));
        prev = deg;
    }
    let out_deg: Vec<usize> = (0..out_multiplier).flat_map(|_| in_deg.iter().copied()).collect();
    masks.push(Array2::from_shape_fn((out_deg.len(), prev.len()), |(i, k)| f64::from(u8::from(out_deg[i] > prev[k]))));
    masks
}
