use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::DataError;
use crate::seeded_rng;

/// Train/validation/test fractions plus shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { fractions: [0.7, 0.15, 0.15], seed: 0 }
    }
}

impl SplitSpec {
    pub fn new(fractions: [f64; 3], seed: u64) -> Result<Self, DataError> {
        let spec = Self { fractions, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(DataError::Split(format!("fractions must be positive, got {:?}", self.fractions)));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::Split(format!("fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Apportions `n` items by largest remainder; ties go to the earlier part.
pub fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Shuffles rows with a seeded permutation and cuts them into train/val/test.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset), DataError> {
    spec.validate()?;
    if dataset.len() < 3 {
        return Err(DataError::Split(format!("need at least 3 rows to split, got {}", dataset.len())));
    }
    let sizes = apportion(dataset.len(), &spec.fractions);
    let mut perm: Vec<usize> = (0..dataset.len()).collect();
    perm.shuffle(&mut seeded_rng(spec.seed));
    let (train, rest) = perm.split_at(sizes[0]);
    let (val, test) = rest.split_at(sizes[1]);
    Ok((dataset.select(train), dataset.select(val), dataset.select(test)))
}
