//! Density-based out-of-distribution detectors for mixed-type tabular data,
//! together with the machinery to choose between them: OOD test-group
//! construction, AUC-ROC evaluation over repeated fits, KernelSHAP
//! interpretability tests and single-sample timing.

pub mod attribution;
pub mod bench;
pub mod data;
pub mod estimators;
pub mod eval;
pub mod nn;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every randomized operation in the crate draws from this generator so that
/// results are a pure function of the seed, independent of platform.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
