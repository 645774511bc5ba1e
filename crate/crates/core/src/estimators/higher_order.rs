//! The higher-order estimator with counterfactual residual resampling.
//!
//! For treatment `i`, with `nu_m = 1{D_m = d^i} - pi_hat^i(Z_m)` and the
//! correction `A_m` built from moments of `nu` over `I`:
//!
//! ```text
//! theta^i = (1/|I|) sum_{m in I} g_m
//!         + (1/|I|) sum_{m in D_i ∩ I} (Y_m - g_m) A_m
//!         + (1/R) sum_u (1/|I|) sum_{m in D_i^c ∩ I} xi_{m,u} A_m
//! ```
//!
//! where each `xi_{m,u}` is drawn uniformly with replacement from the factual
//! residuals `{Y_m - g_m : m in D_i ∩ I}`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_predictions, regression_term, Dataset, EstimateReport, EstimatorKind, NuisancePredictions, TermBreakdown};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::rng::{self, StreamRng};
use crate::score::{compute_coefficients, Moments};

/// Where the residual moments come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum MomentSource {
    /// Sample moments of `1{D = d^i} - pi_hat^i(Z)` over `I`.
    #[default]
    EstimationFold,
    /// Caller-supplied moments, one entry per treatment (plug-in or `I^c`).
    Supplied(Vec<Moments>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HigherOrderConfig {
    pub r: usize,
    pub k: usize,
    /// Resampling repetitions `R`.
    pub reps: usize,
    pub seed: u64,
    pub moments: MomentSource,
}

impl HigherOrderConfig {
    pub fn new(r: usize, k: usize) -> Self {
        Self { r, k, reps: 100, seed: 0, moments: MomentSource::EstimationFold }
    }
}

/// What a sampler sees when asked for one counterfactual residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawContext {
    pub treatment: usize,
    pub repetition: usize,
    /// Dataset index of the counterfactual unit.
    pub row: usize,
    /// `g^i` at that unit.
    pub outcome_prediction: f64,
}

/// Source of the stand-in residuals for units not treated with `d^i`.
pub trait ResidualSampler {
    /// Called once before the draws of each `(treatment, repetition)`.
    fn begin(&mut self, treatment: usize, repetition: usize);
    fn draw(&mut self, ctx: &DrawContext, pool: &[f64]) -> f64;
}

/// Uniform draws with replacement. Repetition `u` of treatment `i` uses the
/// stream `(seed, i << 32 | u)`, so every repetition is reproducible on its
/// own.
#[derive(Debug, Clone)]
pub struct UniformResampler {
    seed: u64,
    rng: StreamRng,
}

impl UniformResampler {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: rng::stream(seed, 0) }
    }
}

impl ResidualSampler for UniformResampler {
    fn begin(&mut self, treatment: usize, repetition: usize) {
        self.rng = rng::stream(self.seed, rng::stream_id(treatment, repetition));
    }

    fn draw(&mut self, _ctx: &DrawContext, pool: &[f64]) -> f64 {
        pool[self.rng.random_range(0..pool.len())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampledTerm {
    /// `(1/R) sum_u (1/|I|) sum_m xi_{m,u} A_m`.
    pub value: f64,
    /// Per counterfactual unit, the mean over repetitions of its drawn residual.
    pub unit_means: Vec<f64>,
}

/// The resampled counterfactual term for one treatment.
///
/// `units` lists `(dataset row, g^i, A)` for `D_i^c ∩ I`; `n_est = |I|`.
/// An empty `units` gives 0.
pub fn resample_counterfactual_term<S: ResidualSampler + ?Sized>(
    treatment: usize,
    units: &[(usize, f64, f64)],
    pool: &[f64],
    n_est: usize,
    reps: usize,
    sampler: &mut S,
) -> Result<ResampledTerm> {
    if reps == 0 {
        return Err(Error::InvalidInput("need at least one resampling repetition".into()));
    }
    if units.is_empty() {
        return Ok(ResampledTerm { value: 0.0, unit_means: Vec::new() });
    }
    if pool.is_empty() {
        return Err(Error::EmptyResidualSet { treatment });
    }
    let mut unit_sums = vec![CompensatedSum::new(); units.len()];
    let mut over_reps = CompensatedSum::new();
    for u in 0..reps {
        sampler.begin(treatment, u);
        let mut acc = CompensatedSum::new();
        for (slot, &(row, g, a)) in units.iter().enumerate() {
            let ctx = DrawContext { treatment, repetition: u, row, outcome_prediction: g };
            let xi = sampler.draw(&ctx, pool);
            unit_sums[slot].add(xi);
            acc.add(xi * a);
        }
        over_reps.add(acc.value() / n_est as f64);
    }
    let r = reps as f64;
    Ok(ResampledTerm {
        value: over_reps.value() / r,
        unit_means: unit_sums.iter().map(|s| s.value() / r).collect(),
    })
}

/// Higher-order estimate with the default uniform resampler seeded by `cfg.seed`.
pub fn estimate_higher_order(ds: &Dataset, preds: &NuisancePredictions, cfg: &HigherOrderConfig) -> Result<EstimateReport> {
    estimate_higher_order_with(ds, preds, cfg, &mut UniformResampler::new(cfg.seed))
}

/// Higher-order estimate with an arbitrary residual sampler.
pub fn estimate_higher_order_with<S: ResidualSampler + ?Sized>(
    ds: &Dataset,
    preds: &NuisancePredictions,
    cfg: &HigherOrderConfig,
    sampler: &mut S,
) -> Result<EstimateReport> {
    check_predictions(ds, preds)?;
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("need at least one resampling repetition".into()));
    }
    let n_t = ds.n_treatments();
    if let MomentSource::Supplied(m) = &cfg.moments {
        if m.len() != n_t {
            return Err(Error::InvalidInput(alloc::format!("{} supplied moment sets for {n_t} treatments", m.len())));
        }
    }
    let rows = preds.rows();
    let n_est = rows.len();
    let max_order = cfg.r.max(cfg.k.saturating_sub(1));
    let labels: Vec<usize> = rows.iter().map(|&m| ds.d()[m]).collect();

    let mut terms = Vec::with_capacity(n_t);
    let mut moments_used = Vec::with_capacity(n_t);
    for i in 0..n_t {
        let pi: Vec<f64> = (0..n_est).map(|j| preds.propensity().get(j, i)).collect();
        let moments = match &cfg.moments {
            MomentSource::EstimationFold => super::estimate_moments(&labels, &pi, i, max_order)?,
            MomentSource::Supplied(m) => m[i].clone(),
        };
        let coeffs = compute_coefficients(cfg.r, cfg.k, &moments)?;
        let g = preds.outcome(i);

        let mut factual = CompensatedSum::new();
        let mut pool = Vec::new();
        let mut counterfactual_units = Vec::new();
        for (j, &m) in rows.iter().enumerate() {
            let treated = labels[j] == i;
            let a = coeffs.correction_at(f64::from(u8::from(treated)) - pi[j], &moments);
            if treated {
                let resid = ds.y()[m] - g[j];
                factual.add(resid * a);
                pool.push(resid);
            } else {
                counterfactual_units.push((m, g[j], a));
            }
        }
        if pool.is_empty() {
            return Err(Error::EmptyResidualSet { treatment: i });
        }
        let resampled = resample_counterfactual_term(i, &counterfactual_units, &pool, n_est, cfg.reps, sampler)?;
        terms.push(TermBreakdown {
            regression: regression_term(preds, i),
            factual: factual.value() / n_est as f64,
            counterfactual: resampled.value,
        });
        moments_used.push(moments);
    }
    Ok(EstimateReport::assemble(
        EstimatorKind::HigherOrder { r: cfg.r, k: cfg.k },
        terms,
        moments_used,
        Some(cfg.reps),
        preds.floored(),
    ))
}
