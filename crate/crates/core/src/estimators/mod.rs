//! DR, DML and higher-order estimators of `theta^i = E[g^i(Z)]`, with the
//! sample split, nuisance fitting and the relative ATE error metric.
//!
//! All estimators read outcomes and labels of the estimation fold `I` only;
//! nuisances come in as [`NuisancePredictions`] on `I`, fitted on `I^c`.

mod dataset;
mod higher_order;
mod metric;
mod predictions;
mod split;

use alloc::vec::Vec;

pub use dataset::Dataset;
pub use higher_order::{
    estimate_higher_order, estimate_higher_order_with, resample_counterfactual_term, DrawContext, HigherOrderConfig,
    MomentSource, ResampledTerm, ResidualSampler, UniformResampler,
};
pub use metric::{epsilon_ate, relative_error};
pub use predictions::{
    estimate_moments, expected_moments, fit_nuisances, training_fold_moments, FittedNuisances, NuisancePredictions,
};
pub use split::{make_split, SplitPlan, SplitRatios};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::score::Moments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Dr,
    Dml,
    HigherOrder { r: usize, k: usize },
}

impl EstimatorKind {
    /// `dr`, `dml`, or `ho(r,k)`.
    pub fn label(&self) -> alloc::string::String {
        match self {
            EstimatorKind::Dr => "dr".into(),
            EstimatorKind::Dml => "dml".into(),
            EstimatorKind::HigherOrder { r, k } => alloc::format!("ho({r},{k})"),
        }
    }
}

/// The three additive pieces of `theta^i`: the regression mean over `I`, the
/// correction over factual units `D_i ∩ I`, and the correction over
/// counterfactual units `D_i^c ∩ I` (zero for DR and DML).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TermBreakdown {
    pub regression: f64,
    pub factual: f64,
    pub counterfactual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Diagnostics {
    /// Propensity entries clamped by a floor before estimation.
    pub floored: usize,
    pub infinite: bool,
    pub nan: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub kind: EstimatorKind,
    pub theta: Vec<f64>,
    /// `ate_pairwise[i][k] = theta[i] - theta[k]`.
    pub ate_pairwise: Vec<Vec<f64>>,
    /// Per treatment; empty for DR and DML.
    pub moments_used: Vec<Moments>,
    /// Resampling repetitions `R`; `None` for DR and DML.
    pub r_reps: Option<usize>,
    pub terms: Vec<TermBreakdown>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    fn assemble(
        kind: EstimatorKind,
        terms: Vec<TermBreakdown>,
        moments_used: Vec<Moments>,
        r_reps: Option<usize>,
        floored: usize,
    ) -> Self {
        let theta: Vec<f64> = terms.iter().map(|t| t.regression + t.factual + t.counterfactual).collect();
        let diagnostics = Diagnostics {
            floored,
            infinite: theta.iter().any(|v| v.is_infinite()),
            nan: theta.iter().any(|v| v.is_nan()),
        };
        Self { kind, ate_pairwise: pairwise(&theta), theta, moments_used, r_reps, terms, diagnostics }
    }

    pub fn is_finite(&self) -> bool {
        !self.diagnostics.infinite && !self.diagnostics.nan
    }
}

/// `out[i][k] = theta[i] - theta[k]`.
pub fn pairwise(theta: &[f64]) -> Vec<Vec<f64>> {
    theta.iter().map(|a| theta.iter().map(|b| a - b).collect()).collect()
}

pub(crate) fn check_predictions(ds: &Dataset, preds: &NuisancePredictions) -> Result<()> {
    if preds.n_treatments() != ds.n_treatments() {
        return Err(Error::InvalidInput(alloc::format!(
            "predictions cover {} treatments, dataset has {}",
            preds.n_treatments(),
            ds.n_treatments()
        )));
    }
    if preds.rows().is_empty() {
        return Err(Error::EmptyFold("estimation"));
    }
    if preds.rows().iter().any(|&m| m >= ds.len()) {
        return Err(Error::InvalidInput("prediction rows outside the dataset".into()));
    }
    Ok(())
}

fn regression_term(preds: &NuisancePredictions, treatment: usize) -> f64 {
    let g = preds.outcome(treatment);
    let mut acc = CompensatedSum::new();
    acc.extend(g.iter().copied());
    acc.value() / g.len() as f64
}

/// `theta^i = (1/|I|) sum_{m in I} g^i(Z_m)`.
pub fn estimate_dr(ds: &Dataset, preds: &NuisancePredictions) -> Result<EstimateReport> {
    check_predictions(ds, preds)?;
    let terms = (0..ds.n_treatments())
        .map(|i| TermBreakdown { regression: regression_term(preds, i), ..Default::default() })
        .collect();
    Ok(EstimateReport::assemble(EstimatorKind::Dr, terms, Vec::new(), None, preds.floored()))
}

/// `theta^i = (1/|I|) sum g^i(Z_m) + (1/|I|) sum 1{D_m = d^i} (Y_m - g^i(Z_m)) / pi^i(Z_m)`.
///
/// Propensities are used as given: a zero propensity on a treated unit makes
/// the estimate infinite (or NaN when its residual is zero), which is flagged
/// in the diagnostics rather than reported as an error.
pub fn estimate_dml(ds: &Dataset, preds: &NuisancePredictions) -> Result<EstimateReport> {
    check_predictions(ds, preds)?;
    let n = preds.rows().len() as f64;
    let terms = (0..ds.n_treatments())
        .map(|i| {
            let g = preds.outcome(i);
            let mut acc = CompensatedSum::new();
            for (j, &m) in preds.rows().iter().enumerate() {
                if ds.d()[m] == i {
                    acc.add((ds.y()[m] - g[j]) / preds.propensity().get(j, i));
                }
            }
            TermBreakdown { regression: regression_term(preds, i), factual: acc.value() / n, counterfactual: 0.0 }
        })
        .collect();
    Ok(EstimateReport::assemble(EstimatorKind::Dml, terms, Vec::new(), None, preds.floored()))
}
