use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::round;
use crate::rng;

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const fn new(train: f64, valid: f64, test: f64) -> Self {
        Self { train, valid, test }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidInput("split ratios must be positive".into()));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(alloc::format!("split ratios sum to {total}, not 1")));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    /// 56% / 14% / 30%.
    fn default() -> Self {
        Self::new(0.56, 0.14, 0.30)
    }
}

/// The estimation fold `I` (test portion) and the training fold `I^c`
/// (train plus validation). Both index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    estimation_idx: Vec<usize>,
    training_idx: Vec<usize>,
    seed: u64,
}

impl SplitPlan {
    /// A plan from explicit folds. They must be disjoint, non-empty and
    /// together cover `0..n`.
    pub fn from_indices(n: usize, mut estimation_idx: Vec<usize>, mut training_idx: Vec<usize>) -> Result<Self> {
        if estimation_idx.is_empty() {
            return Err(Error::EmptyFold("estimation"));
        }
        if training_idx.is_empty() {
            return Err(Error::EmptyFold("training"));
        }
        let mut seen = alloc::vec![false; n];
        for &m in estimation_idx.iter().chain(&training_idx) {
            if m >= n || seen[m] {
                return Err(Error::InvalidInput("folds must be disjoint indices below n".into()));
            }
            seen[m] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("folds must cover every unit".into()));
        }
        estimation_idx.sort_unstable();
        training_idx.sort_unstable();
        Ok(Self { estimation_idx, training_idx, seed: 0 })
    }

    pub fn estimation_idx(&self) -> &[usize] {
        &self.estimation_idx
    }

    pub fn training_idx(&self) -> &[usize] {
        &self.training_idx
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.estimation_idx.len() + self.training_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Random split of `0..n`: after a seeded permutation the first
/// `round(n * test)` units form `I`, the next `round(n * valid)` the
/// validation part and the rest the training part; `I^c` is train plus
/// validation.
pub fn make_split(n: usize, ratios: SplitRatios, seed: u64) -> Result<SplitPlan> {
    ratios.validate()?;
    let n_test = round(n as f64 * ratios.test) as usize;
    let n_valid = round(n as f64 * ratios.valid) as usize;
    if n_test == 0 {
        return Err(Error::EmptyFold("test"));
    }
    if n_valid == 0 {
        return Err(Error::EmptyFold("validation"));
    }
    if n_test + n_valid >= n {
        return Err(Error::EmptyFold("training"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut perm, &mut rng::stream(seed, 0));
    let mut estimation_idx = perm[..n_test].to_vec();
    let mut training_idx = perm[n_test..].to_vec();
    estimation_idx.sort_unstable();
    training_idx.sort_unstable();
    Ok(SplitPlan { estimation_idx, training_idx, seed })
}
