use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::nuisance::{
    fit_classifier, fit_regressor, predict_outcome, predict_propensity, FeatureMatrix, LearnerSpec, ProbabilityMatrix,
    PropensityFit, RegressorFit,
};
use crate::numeric::{ln, softmax_in_place, CompensatedSum};
use crate::rng;
use crate::score::Moments;

/// Outcome regressions (one per treatment) and the propensity model, all
/// trained on `I^c` only.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedNuisances {
    pub regressors: Vec<RegressorFit>,
    pub propensity: PropensityFit,
}

impl FittedNuisances {
    /// Predictions for the units in `rows`.
    pub fn predict(&self, ds: &Dataset, rows: &[usize]) -> Result<NuisancePredictions> {
        let x = ds.z().select_rows(rows);
        let outcome = self.regressors.iter().map(|f| predict_outcome(f, &x)).collect::<Result<Vec<_>>>()?;
        let propensity = predict_propensity(&self.propensity, &x)?;
        NuisancePredictions::new(rows.to_vec(), outcome, propensity)
    }
}

/// `g^i` is fitted on `I^c ∩ D_i` for every treatment `i`; the multinomial
/// propensity model is fitted on all of `I^c`.
pub fn fit_nuisances(ds: &Dataset, split: &SplitPlan, spec: &LearnerSpec) -> Result<FittedNuisances> {
    let train = split.training_idx();
    let x_train = ds.z().select_rows(train);
    let d_train: Vec<usize> = train.iter().map(|&m| ds.d()[m]).collect();
    let mut regressors = Vec::with_capacity(ds.n_treatments());
    for i in 0..ds.n_treatments() {
        let rows: Vec<usize> = train.iter().copied().filter(|&m| ds.d()[m] == i).collect();
        if rows.is_empty() {
            return Err(Error::MissingClass(i));
        }
        let x = ds.z().select_rows(&rows);
        let y: Vec<f64> = rows.iter().map(|&m| ds.y()[m]).collect();
        regressors.push(fit_regressor(&x, &y, &spec.regressor)?);
    }
    let propensity = fit_classifier(&x_train, &d_train, ds.n_treatments(), &spec.classifier)?;
    Ok(FittedNuisances { regressors, propensity })
}

/// Nuisance values on the estimation fold: `outcome[i][j] = g^i(Z_{rows[j]})`
/// and `propensity.get(j, i) = pi^i(Z_{rows[j]})`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisancePredictions {
    rows: Vec<usize>,
    outcome: Vec<Vec<f64>>,
    propensity: ProbabilityMatrix,
    floored: usize,
}

impl NuisancePredictions {
    pub fn new(rows: Vec<usize>, outcome: Vec<Vec<f64>>, propensity: ProbabilityMatrix) -> Result<Self> {
        let n = rows.len();
        if outcome.len() != propensity.n_classes() {
            return Err(Error::InvalidInput(format!(
                "{} outcome columns for {} treatments",
                outcome.len(),
                propensity.n_classes()
            )));
        }
        if outcome.iter().any(|c| c.len() != n) || propensity.n_rows() != n {
            return Err(Error::InvalidInput("prediction lengths do not match the row list".into()));
        }
        if outcome.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcome predictions"));
        }
        Ok(Self { rows, outcome, propensity, floored: 0 })
    }

    /// Dataset indices the predictions refer to.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn n_treatments(&self) -> usize {
        self.outcome.len()
    }

    pub fn outcome(&self, treatment: usize) -> &[f64] {
        &self.outcome[treatment]
    }

    pub fn propensity(&self) -> &ProbabilityMatrix {
        &self.propensity
    }

    /// Entries moved by [`apply_floor`](Self::apply_floor) so far.
    pub fn floored(&self) -> usize {
        self.floored
    }

    /// Clamps propensities into `[floor, 1 - floor]`. A floor of 0 does nothing.
    pub fn apply_floor(&mut self, floor: f64) -> Result<usize> {
        if !(0.0..0.5).contains(&floor) {
            return Err(Error::InvalidInput(format!("propensity floor {floor} outside [0, 0.5)")));
        }
        let moved = self.propensity.apply_floor(floor);
        self.floored += moved;
        Ok(moved)
    }

    /// Adds independent `N(0, sigma^2)` noise to every log-probability and
    /// renormalizes each row with a softmax.
    pub fn corrupt_logits(&mut self, sigma: f64, seed: u64) -> Result<()> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput("noise scale must be finite and non-negative".into()));
        }
        let mut r = rng::stream(seed, 0);
        let k = self.propensity.n_classes();
        let mut logits = vec![0.0; k];
        for chunk in self.propensity.values_mut().chunks_exact_mut(k) {
            for (l, p) in logits.iter_mut().zip(chunk.iter()) {
                *l = ln(p.max(f64::MIN_POSITIVE)) + sigma * rng::standard_normal(&mut r);
            }
            softmax_in_place(&mut logits);
            chunk.copy_from_slice(&logits);
        }
        Ok(())
    }
}

fn check_order(max_order: usize) -> Result<()> {
    if max_order < 2 {
        return Err(Error::InvalidMoments("max_order must be at least 2".into()));
    }
    Ok(())
}

/// Sample moments `(1/|I|) sum_m (1{d_m = i} - pi_hat^i(z_m))^q`,
/// `q = 1..=max_order`, over the given labels and predictions.
pub fn estimate_moments(d: &[usize], pi_hat: &[f64], treatment: usize, max_order: usize) -> Result<Moments> {
    check_order(max_order)?;
    if d.len() != pi_hat.len() {
        return Err(Error::InvalidInput("labels and predictions differ in length".into()));
    }
    let residuals: Vec<f64> = d
        .iter()
        .zip(pi_hat)
        .map(|(&label, &p)| f64::from(u8::from(label == treatment)) - p)
        .collect();
    Moments::from_residuals(&residuals, max_order)
}

/// Plug-in moments from propensities alone:
/// `(1/n) sum_m [pi_m (1 - pi_m)^q + (1 - pi_m)(-pi_m)^q]`, the mean of the
/// conditional moments `E[nu^q | Z_m]`.
pub fn expected_moments(propensities: &[f64], max_order: usize) -> Result<Moments> {
    check_order(max_order)?;
    if propensities.is_empty() {
        return Err(Error::InvalidMoments("no propensities".into()));
    }
    if propensities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidMoments("propensities must lie in [0, 1]".into()));
    }
    let n = propensities.len() as f64;
    let values = (1..=max_order)
        .map(|q| {
            let mut acc = CompensatedSum::new();
            for &p in propensities {
                acc.add(p * crate::numeric::powi(1.0 - p, q) + (1.0 - p) * crate::numeric::powi(-p, q));
            }
            acc.value() / n
        })
        .collect();
    Moments::new(values)
}

/// Moments from `I^c`: the alternative to estimating them on `I`.
pub fn training_fold_moments(
    ds: &Dataset,
    split: &SplitPlan,
    fits: &FittedNuisances,
    treatment: usize,
    max_order: usize,
) -> Result<Moments> {
    let train = split.training_idx();
    let x: FeatureMatrix = ds.z().select_rows(train);
    let probs = predict_propensity(&fits.propensity, &x)?;
    let d: Vec<usize> = train.iter().map(|&m| ds.d()[m]).collect();
    estimate_moments(&d, &probs.column(treatment), treatment, max_order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_unit_moments_are_powers() {
        let m = estimate_moments(&[1], &[0.3], 1, 4).unwrap();
        for q in 1..=4 {
            assert!((m.get(q) - crate::numeric::powi(0.7, q)).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_propensity_gives_zero_moments() {
        let d = [0, 1, 1, 0];
        let pi: Vec<f64> = d.iter().map(|&l| f64::from(u8::from(l == 1))).collect();
        let m = estimate_moments(&d, &pi, 1, 3).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(
            crate::score::compute_coefficients(2, 2, &m),
            Err(Error::DegenerateMoment { .. })
        ));
    }

    #[test]
    fn expected_moments_of_constant_match_bernoulli() {
        let e = expected_moments(&[0.3; 5], 4).unwrap();
        let b = Moments::bernoulli(0.3, 4).unwrap();
        for q in 1..=4 {
            assert!((e.get(q) - b.get(q)).abs() < 1e-15);
        }
    }

    #[test]
    fn corruption_keeps_rows_normalized() {
        let p = ProbabilityMatrix::from_rows(&[vec![0.2, 0.8], vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let mut preds = NuisancePredictions::new(vec![0, 1, 2], vec![vec![0.0; 3], vec![0.0; 3]], p).unwrap();
        preds.corrupt_logits(0.5, 3).unwrap();
        for j in 0..3 {
            let row = preds.propensity().row(j);
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
        assert_ne!(preds.propensity().get(0, 0), 0.2);
    }
}
