//! Nuisance learners: outcome regressions `g^i` and the propensity `pi`.
//!
//! Three learners are provided, all fitted and evaluated serially:
//! Lasso (coordinate descent), multinomial logistic regression, and random
//! forests for either task.

pub mod forest;
pub mod lasso;
pub mod logistic;
pub mod matrix;

use alloc::vec;
use alloc::vec::Vec;

pub use forest::{Forest, ForestParams};
pub use lasso::LassoModel;
pub use logistic::LogisticModel;
pub use matrix::{FeatureMatrix, ProbabilityMatrix, Standardization};

use crate::error::{Error, Result};
use crate::numeric::mean;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoParams {
    /// Candidate penalties; more than one triggers cross-validation.
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self { lambda_grid: vec![1e-3, 1e-2, 1e-1], cv_folds: 5, max_iter: 1000, tol: 1e-7, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2: 1e-4, max_iter: 500, tol: 1e-6 }
    }
}

/// How an outcome regression is fitted.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorSpec {
    Lasso(LassoParams),
    Forest(ForestParams),
    /// Training-fold mean of `y`; mostly for tests and hand-checked fixtures.
    Mean,
}

/// How the propensity model is fitted.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    Logistic(LogisticParams),
    Forest(ForestParams),
    /// Training-fold class frequencies, ignoring `Z`.
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub regressor: RegressorSpec,
    pub classifier: ClassifierSpec,
}

impl LearnerSpec {
    /// Short label such as `lasso+logistic`.
    pub fn name(&self) -> &'static str {
        match (&self.regressor, &self.classifier) {
            (RegressorSpec::Lasso(_), ClassifierSpec::Logistic(_)) => "lasso+logistic",
            (RegressorSpec::Lasso(_), ClassifierSpec::Forest(_)) => "lasso+forest",
            (RegressorSpec::Lasso(_), ClassifierSpec::Frequency) => "lasso+frequency",
            (RegressorSpec::Forest(_), ClassifierSpec::Logistic(_)) => "forest+logistic",
            (RegressorSpec::Forest(_), ClassifierSpec::Forest(_)) => "forest+forest",
            (RegressorSpec::Forest(_), ClassifierSpec::Frequency) => "forest+frequency",
            (RegressorSpec::Mean, ClassifierSpec::Logistic(_)) => "mean+logistic",
            (RegressorSpec::Mean, ClassifierSpec::Forest(_)) => "mean+forest",
            (RegressorSpec::Mean, ClassifierSpec::Frequency) => "mean+frequency",
        }
    }
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self {
            regressor: RegressorSpec::Lasso(LassoParams::default()),
            classifier: ClassifierSpec::Logistic(LogisticParams::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum RegressorKind {
    Lasso(LassoModel),
    Forest(Forest),
    Constant(f64),
}

/// A fitted outcome regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorFit {
    kind: RegressorKind,
    n_features: usize,
}

impl RegressorFit {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn as_lasso(&self) -> Option<&LassoModel> {
        match &self.kind {
            RegressorKind::Lasso(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ClassifierKind {
    Logistic(LogisticModel),
    Forest(Forest),
    Frequency(Vec<f64>),
}

/// A fitted propensity model over `n_treatments` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    kind: ClassifierKind,
    n_treatments: usize,
    n_features: usize,
}

impl PropensityFit {
    pub fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn as_logistic(&self) -> Option<&LogisticModel> {
        match &self.kind {
            ClassifierKind::Logistic(m) => Some(m),
            _ => None,
        }
    }
}

pub fn fit_lasso(x: &FeatureMatrix, y: &[f64], params: &LassoParams) -> Result<RegressorFit> {
    let model = lasso::fit_lasso_cv_model(x, y, &params.lambda_grid, params.cv_folds, params.max_iter, params.tol, params.seed)?;
    Ok(RegressorFit { kind: RegressorKind::Lasso(model), n_features: x.n_cols() })
}

pub fn fit_forest_regress(x: &FeatureMatrix, y: &[f64], params: &ForestParams) -> Result<RegressorFit> {
    let model = forest::fit_forest_regressor(x, y, params)?;
    Ok(RegressorFit { kind: RegressorKind::Forest(model), n_features: x.n_cols() })
}

pub fn fit_mean(x: &FeatureMatrix, y: &[f64]) -> Result<RegressorFit> {
    if y.is_empty() || y.len() != x.n_rows() {
        return Err(Error::InvalidInput("mean regressor needs matching non-empty y".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression targets"));
    }
    Ok(RegressorFit { kind: RegressorKind::Constant(mean(y)), n_features: x.n_cols() })
}

pub fn fit_regressor(x: &FeatureMatrix, y: &[f64], spec: &RegressorSpec) -> Result<RegressorFit> {
    match spec {
        RegressorSpec::Lasso(p) => fit_lasso(x, y, p),
        RegressorSpec::Forest(p) => fit_forest_regress(x, y, p),
        RegressorSpec::Mean => fit_mean(x, y),
    }
}

pub fn fit_logistic(x: &FeatureMatrix, d: &[usize], n_treatments: usize, params: &LogisticParams) -> Result<PropensityFit> {
    let model = logistic::fit_logistic_model(x, d, n_treatments, params.l2, params.max_iter, params.tol)?;
    Ok(PropensityFit { kind: ClassifierKind::Logistic(model), n_treatments, n_features: x.n_cols() })
}

pub fn fit_forest_classify(x: &FeatureMatrix, d: &[usize], n_treatments: usize, params: &ForestParams) -> Result<PropensityFit> {
    let model = forest::fit_forest_classifier(x, d, n_treatments, params)?;
    Ok(PropensityFit { kind: ClassifierKind::Forest(model), n_treatments, n_features: x.n_cols() })
}

pub fn fit_frequency(x: &FeatureMatrix, d: &[usize], n_treatments: usize) -> Result<PropensityFit> {
    if d.is_empty() || d.len() != x.n_rows() {
        return Err(Error::InvalidInput("frequency classifier needs matching non-empty labels".into()));
    }
    let mut freq = vec![0.0; n_treatments];
    for &label in d {
        if label >= n_treatments {
            return Err(Error::InvalidInput(alloc::format!("label {label} outside 0..{n_treatments}")));
        }
        freq[label] += 1.0;
    }
    let n = d.len() as f64;
    freq.iter_mut().for_each(|f| *f /= n);
    Ok(PropensityFit { kind: ClassifierKind::Frequency(freq), n_treatments, n_features: x.n_cols() })
}

pub fn fit_classifier(x: &FeatureMatrix, d: &[usize], n_treatments: usize, spec: &ClassifierSpec) -> Result<PropensityFit> {
    match spec {
        ClassifierSpec::Logistic(p) => fit_logistic(x, d, n_treatments, p),
        ClassifierSpec::Forest(p) => fit_forest_classify(x, d, n_treatments, p),
        ClassifierSpec::Frequency => fit_frequency(x, d, n_treatments),
    }
}

pub fn predict_outcome(fit: &RegressorFit, x: &FeatureMatrix) -> Result<Vec<f64>> {
    x.check_cols(fit.n_features)?;
    Ok(match &fit.kind {
        RegressorKind::Lasso(m) => x.rows().map(|r| m.predict_row(r)).collect(),
        RegressorKind::Forest(f) => {
            let mut out = [0.0];
            x.rows()
                .map(|r| {
                    f.predict_row(r, &mut out);
                    out[0]
                })
                .collect()
        }
        RegressorKind::Constant(c) => vec![*c; x.n_rows()],
    })
}

/// Class probabilities, one row per row of `x`. Rows sum to one up to
/// rounding.
pub fn predict_propensity(fit: &PropensityFit, x: &FeatureMatrix) -> Result<ProbabilityMatrix> {
    x.check_cols(fit.n_features)?;
    let k = fit.n_treatments;
    let mut values = vec![0.0; x.n_rows() * k];
    for (i, row) in x.rows().enumerate() {
        let out = &mut values[i * k..(i + 1) * k];
        match &fit.kind {
            ClassifierKind::Logistic(m) => m.predict_row(row, out),
            ClassifierKind::Forest(f) => {
                debug_assert_eq!(f.width(), k);
                f.predict_row(row, out)
            }
            ClassifierKind::Frequency(freq) => out.copy_from_slice(freq),
        }
    }
    // Guard against rounding just outside [0, 1].
    values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    ProbabilityMatrix::new(x.n_rows(), k, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_checks_feature_count() {
        let x = FeatureMatrix::new(4, 2, vec![0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 3.0, 0.5]).unwrap();
        let fit = fit_mean(&x, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let bad = FeatureMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        assert_eq!(predict_outcome(&fit, &bad).unwrap_err(), Error::ShapeMismatch { expected: 2, found: 3 });
        assert_eq!(predict_outcome(&fit, &x).unwrap(), vec![2.5; 4]);
    }

    #[test]
    fn empty_batch_predicts_nothing() {
        let x = FeatureMatrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let fit = fit_frequency(&x, &[0, 1, 1], 2).unwrap();
        let empty = FeatureMatrix::new(0, 1, vec![]).unwrap();
        assert_eq!(predict_propensity(&fit, &empty).unwrap().n_rows(), 0);
        let p = predict_propensity(&fit, &x).unwrap();
        assert!((p.get(0, 1) - 2.0 / 3.0).abs() < 1e-15);
    }
}
