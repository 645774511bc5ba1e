use alloc::format;
use alloc::vec::Vec;

use super::EstimateReport;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// `sum_{i != k} |est[i][k] - truth[i][k]| / sum_{i != k} |truth[i][k]|` for
/// one dataset. `index` only labels the error.
pub fn relative_error(estimate: &[Vec<f64>], truth: &[Vec<f64>], index: usize) -> Result<f64> {
    let n = truth.len();
    if estimate.len() != n || estimate.iter().chain(truth).any(|r| r.len() != n) {
        return Err(Error::InvalidInput(format!("dataset {index}: pairwise matrices must both be {n} x {n}")));
    }
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for i in 0..n {
        for k in 0..n {
            if i != k {
                num.add((estimate[i][k] - truth[i][k]).abs());
                den.add(truth[i][k].abs());
            }
        }
    }
    let den = den.value();
    if den == 0.0 {
        return Err(Error::ZeroDenominator { index });
    }
    Ok(num.value() / den)
}

/// Average relative error of the pairwise effects over `M` datasets.
pub fn epsilon_ate(estimates: &[EstimateReport], truths: &[Vec<Vec<f64>>]) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(Error::InvalidInput("need matching, non-empty lists of estimates and truths".into()));
    }
    let mut acc = CompensatedSum::new();
    for (m, (est, truth)) in estimates.iter().zip(truths).enumerate() {
        acc.add(relative_error(&est.ate_pairwise, truth, m)?);
    }
    Ok(acc.value() / estimates.len() as f64)
}
