use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Value};
use super::schema::{Feature, FeatureSchema};
use super::DataError;
use crate::seeded_rng;

fn default_flip() -> f64 {
    0.0
}

/// Parameters of the synthetic mixed-type generator.
///
/// Continuous features follow a correlated Gaussian: a rank-`latent_rank`
/// factor model plus unit idiosyncratic noise, rescaled so feature `j` has
/// mean `means[j]` and standard deviation `stds[j]` (both drawn from the seed).
/// Categoricals are independent draws from fixed level probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    /// Size of the shifted cohort; defaults to `n_rows`.
    #[serde(default)]
    pub n_shifted: Option<usize>,
    pub n_continuous: usize,
    #[serde(default)]
    pub categorical_levels: Vec<usize>,
    #[serde(default)]
    pub latent_rank: usize,
    /// Mean shift per continuous feature, in units of that feature's std.
    /// Empty means no shift.
    #[serde(default)]
    pub shift: Vec<f64>,
    #[serde(default = "default_flip")]
    pub flip_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// Spec with no shift and no flips.
    pub fn null(n_rows: usize, n_continuous: usize, categorical_levels: Vec<usize>, latent_rank: usize, seed: u64) -> Self {
        Self {
            n_rows,
            n_shifted: None,
            n_continuous,
            categorical_levels,
            latent_rank,
            shift: vec![0.0; n_continuous],
            flip_prob: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_rows < 1 {
            return Err(DataError::Synthetic("n_rows must be at least 1".into()));
        }
        if self.n_shifted == Some(0) {
            return Err(DataError::Synthetic("n_shifted must be at least 1".into()));
        }
        if self.n_continuous + self.categorical_levels.len() == 0 {
            return Err(DataError::Synthetic("spec has no features".into()));
        }
        if !self.shift.is_empty() && self.shift.len() != self.n_continuous {
            return Err(DataError::Synthetic(format!(
                "shift vector has length {}, expected {}",
                self.shift.len(),
                self.n_continuous
            )));
        }
        if self.shift.iter().any(|s| !s.is_finite()) {
            return Err(DataError::Synthetic("shift entries must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(DataError::Synthetic(format!("flip probability {} outside [0, 1]", self.flip_prob)));
        }
        if let Some(&l) = self.categorical_levels.iter().find(|&&l| l < 2) {
            return Err(DataError::Synthetic(format!("categorical with {l} levels; need at least 2")));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        let mut features: Vec<Feature> = (0..self.n_continuous).map(|j| Feature::continuous(format!("x{j}"))).collect();
        for (c, &n) in self.categorical_levels.iter().enumerate() {
            features.push(Feature::categorical(format!("c{c}"), (0..n).map(|l| format!("L{l}"))));
        }
        FeatureSchema::new(features).expect("generated names are unique")
    }
}

/// Population parameters drawn from the generator seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLaw {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `n_continuous x latent_rank` loadings, row-major.
    pub loadings: Vec<f64>,
    pub level_probs: Vec<Vec<f64>>,
}

fn draw_law<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> SyntheticLaw {
    let d = spec.n_continuous;
    let means = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let stds = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    let loadings = (0..d * spec.latent_rank).map(|_| StandardNormal.sample(rng)).collect();
    let level_probs = spec
        .categorical_levels
        .iter()
        .map(|&n| {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        })
        .collect();
    SyntheticLaw { means, stds, loadings, level_probs }
}

fn draw_rows<R: Rng>(spec: &SyntheticSpec, law: &SyntheticLaw, n: usize, shifted: bool, rng: &mut R) -> Vec<Vec<Value>> {
    let d = spec.n_continuous;
    let rank = spec.latent_rank;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(rng)).collect();
        let mut row = Vec::with_capacity(d + spec.categorical_levels.len());
        for j in 0..d {
            let load = &law.loadings[j * rank..(j + 1) * rank];
            let common: f64 = load.iter().zip(&z).map(|(a, b)| a * b).sum();
            let noise: f64 = StandardNormal.sample(rng);
            let scale = (load.iter().map(|a| a * a).sum::<f64>() + 1.0).sqrt();
            let mut x = law.means[j] + law.stds[j] * (common + noise) / scale;
            if shifted {
                x += spec.shift.get(j).copied().unwrap_or(0.0) * law.stds[j];
            }
            row.push(Value::Num(x));
        }
        for probs in &law.level_probs {
            let u: f64 = rng.random();
            let mut level = probs.len() - 1;
            let mut acc = 0.0;
            for (l, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    level = l;
                    break;
                }
            }
            // Both draws are always consumed so the stream does not depend on flip_prob.
            let flip: f64 = rng.random();
            let other = rng.random_range(0..probs.len() - 1);
            if shifted && flip < spec.flip_prob {
                level = if other >= level { other + 1 } else { other };
            }
            row.push(Value::Level(level));
        }
        rows.push(row);
    }
    rows
}

/// Population parameters used by [`generate_synthetic`] for this spec.
pub fn synthetic_law(spec: &SyntheticSpec) -> Result<SyntheticLaw, DataError> {
    spec.validate()?;
    Ok(draw_law(spec, &mut seeded_rng(spec.seed)))
}

/// Draws an in-distribution dataset and an independently drawn shifted cohort.
///
/// The shifted cohort adds `shift[j] * std[j]` to each continuous feature and
/// replaces each categorical by a uniformly chosen other level with
/// probability `flip_prob`. Row ids are `0..n` and `s0..sm` respectively.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset), DataError> {
    spec.validate()?;
    let schema = Arc::new(spec.schema());
    let mut rng = seeded_rng(spec.seed);
    let law = draw_law(spec, &mut rng);
    let in_rows = draw_rows(spec, &law, spec.n_rows, false, &mut rng);
    let n_shift = spec.n_shifted.unwrap_or(spec.n_rows);
    let shift_rows = draw_rows(spec, &law, n_shift, true, &mut rng);
    let in_dist = Dataset::with_index_ids(Arc::clone(&schema), in_rows)?;
    let shifted = Dataset::new(schema, shift_rows, (0..n_shift).map(|i| format!("s{i}")).collect())?;
    Ok((in_dist, shifted))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let spec = SyntheticSpec::null(50, 3, vec![2, 4], 2, 11);
        let (a, b) = generate_synthetic(&spec).unwrap();
        let (a2, b2) = generate_synthetic(&spec).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        assert_eq!(a.len(), 50);
        assert_eq!(a.schema().len(), 5);
        assert_eq!(b.row_ids()[0], "s0");
    }

    #[test]
    fn shift_moves_sample_mean() {
        let mut spec = SyntheticSpec::null(4000, 2, vec![], 1, 5);
        spec.shift = vec![3.0, 0.0];
        let law = synthetic_law(&spec).unwrap();
        let (a, b) = generate_synthetic(&spec).unwrap();
        let mean = |d: &Dataset, j| d.continuous_column(j).unwrap().iter().sum::<f64>() / d.len() as f64;
        let se = law.stds[0] * (2.0 / 4000.0f64).sqrt();
        let diff = mean(&b, 0) - mean(&a, 0);
        assert!((diff - 3.0 * law.stds[0]).abs() < 3.0 * se, "diff {diff}");
        assert!((mean(&b, 1) - mean(&a, 1)).abs() < 3.0 * law.stds[1] * (2.0 / 4000.0f64).sqrt());
    }

    #[test]
    fn flips_always_change_level() {
        let mut spec = SyntheticSpec::null(200, 0, vec![3], 0, 2);
        spec.flip_prob = 1.0;
        let unflipped = generate_synthetic(&SyntheticSpec { flip_prob: 0.0, ..spec.clone() }).unwrap().1;
        let flipped = generate_synthetic(&spec).unwrap().1;
        for (r0, r1) in unflipped.rows().iter().zip(flipped.rows()) {
            assert_ne!(r0[0], r1[0]);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SyntheticSpec::null(10, 2, vec![], 0, 0);
        spec.shift = vec![1.0];
        assert!(generate_synthetic(&spec).is_err());
        let mut spec = SyntheticSpec::null(10, 2, vec![], 0, 0);
        spec.flip_prob = 1.5;
        assert!(generate_synthetic(&spec).is_err());
        assert!(generate_synthetic(&SyntheticSpec::null(0, 2, vec![], 0, 0)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::null(5, 1, vec![1], 0, 0)).is_err());
    }
}
