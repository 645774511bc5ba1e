//! Experiment sweeps over the confounding ratio, the dimension or the sample
//! size.
//!
//! A sweep is flattened into independent [`SweepJob`]s, one per
//! `(grid point, replication)`. Each job is a pure function of its inputs, so
//! jobs may run in any order or in parallel; [`run_sweep`] runs them serially.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{draw_default_params, generate_dataset, SimConfig, SimTruth};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_dml, estimate_dr, estimate_higher_order, estimate_moments, fit_nuisances, make_split, relative_error,
    Dataset, EstimatorKind, FittedNuisances, HigherOrderConfig, MomentSource, NuisancePredictions, SplitPlan,
    SplitRatios,
};
use crate::nuisance::LearnerSpec;
use crate::numeric::{median, CompensatedSum};
use crate::rng::mix_seed;

const SPLIT_SALT: u64 = 0x0053_504c_4954;
const NOISE_SALT: u64 = 0x004e_4f49_5345;
const RESAMPLE_SALT: u64 = 0x5245_5341_4d50;
const PARAM_SALT: u64 = 0x0050_4152_414d;

#[derive(Debug, Clone, PartialEq)]
pub enum SweepKind {
    Confounding(Vec<f64>),
    Dimension(Vec<usize>),
    SampleSize(Vec<usize>),
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::Confounding(_) => "confounding",
            SweepKind::Dimension(_) => "dimension",
            SweepKind::SampleSize(_) => "samplesize",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepKind::Confounding(v) => v.len(),
            SweepKind::Dimension(v) => v.len(),
            SweepKind::SampleSize(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, idx: usize) -> f64 {
        match self {
            SweepKind::Confounding(v) => v[idx],
            SweepKind::Dimension(v) => v[idx] as f64,
            SweepKind::SampleSize(v) => v[idx] as f64,
        }
    }
}

/// Nuisances learned from data, or the true ones injected.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerChoice {
    Fitted(LearnerSpec),
    Oracle,
}

impl LearnerChoice {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerChoice::Fitted(spec) => spec.name(),
            LearnerChoice::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentChoice {
    /// Moments estimated on `I`.
    #[default]
    EstimationFold,
    /// Moments estimated on `I^c` with the same propensity model.
    TrainingFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthChoice {
    /// `theta^i` averaged over `I`.
    #[default]
    EstimationFold,
    /// `theta^i` averaged over the whole dataset.
    FullSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub ratios: SplitRatios,
    /// Draw fresh DGP parameters for every replication instead of once per
    /// grid point.
    pub redraw_per_replication: bool,
    pub propensity_floor: f64,
    /// Standard deviation of Gaussian noise added to predicted log-propensities.
    pub propensity_noise_sd: f64,
    /// Resampling repetitions `R` of the higher-order estimators.
    pub resample_reps: usize,
    pub moments: MomentChoice,
    pub truth: TruthChoice,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            ratios: SplitRatios::default(),
            redraw_per_replication: false,
            propensity_floor: 0.0,
            propensity_noise_sd: 0.0,
            resample_reps: 100,
            moments: MomentChoice::EstimationFold,
            truth: TruthChoice::EstimationFold,
        }
    }
}

/// One `(grid point, replication)` of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub grid_index: usize,
    pub grid_value: f64,
    pub replication: usize,
    pub cfg: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub grid_value: f64,
    pub learner: String,
    pub estimator: EstimatorKind,
    pub replication: usize,
    /// NaN when the replication failed.
    pub epsilon_ate: f64,
    /// The DML estimate of this replication was infinite or NaN.
    pub dml_infinite: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Aggregate over replications for one `(grid value, learner, estimator)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub grid_value: f64,
    pub learner: String,
    pub estimator: EstimatorKind,
    pub replications: usize,
    /// Replications with a finite error.
    pub finite: usize,
    pub failed: usize,
    /// Over finite errors only; NaN when there are none.
    pub mean: f64,
    pub median: f64,
}

/// Configuration at grid point `idx`: `base` with the swept field replaced.
/// Parameters are drawn from `base.master_seed` unless the sweep leaves
/// their shapes unchanged, in which case `base`'s parameters are kept.
fn grid_config(base: &SimConfig, sweep: &SweepKind, idx: usize) -> Result<SimConfig> {
    let n = base.n_treatments();
    match sweep {
        SweepKind::SampleSize(qs) => Ok(SimConfig { q: qs[idx], ..base.clone() }),
        SweepKind::Confounding(rs) => SimConfig::with_defaults_like(base, base.p, rs[idx], n),
        SweepKind::Dimension(ps) => SimConfig::with_defaults_like(base, ps[idx], base.r_c, n),
    }
}

impl SimConfig {
    fn with_defaults_like(base: &SimConfig, p: usize, r_c: f64, n: usize) -> Result<Self> {
        let mut params = draw_default_params(p, r_c, n, base.master_seed)?;
        params.d_levels = base.d_levels.clone();
        params.noise_sd = base.noise_sd.clone();
        Self::from_params(p, r_c, base.q, base.m, params, base.master_seed)
    }
}

/// Every job of a sweep, grid-major.
pub fn sweep_jobs(base: &SimConfig, sweep: &SweepKind) -> Result<Vec<SweepJob>> {
    base.validate()?;
    if sweep.is_empty() {
        return Err(Error::InvalidInput("empty sweep grid".into()));
    }
    if base.m == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    let mut jobs = Vec::with_capacity(sweep.len() * base.m);
    for idx in 0..sweep.len() {
        let cfg = grid_config(base, sweep, idx)?;
        for rep in 0..base.m {
            jobs.push(SweepJob { grid_index: idx, grid_value: sweep.value(idx), replication: rep, cfg: cfg.clone() });
        }
    }
    Ok(jobs)
}

struct Replication {
    ds: Dataset,
    truth: SimTruth,
    split: SplitPlan,
}

fn prepare(job: &SweepJob, options: &SweepOptions) -> Result<Replication> {
    let mut cfg = job.cfg.clone();
    if options.redraw_per_replication {
        let seed = mix_seed(cfg.master_seed, PARAM_SALT ^ job.replication as u64);
        let mut params = draw_default_params(cfg.p, cfg.r_c, cfg.n_treatments(), seed)?;
        params.d_levels = cfg.d_levels.clone();
        params.noise_sd = cfg.noise_sd.clone();
        cfg = SimConfig::from_params(cfg.p, cfg.r_c, cfg.q, cfg.m, params, cfg.master_seed)?;
    }
    let (ds, truth) = generate_dataset(&cfg, job.replication)?;
    let split = make_split(ds.len(), options.ratios, mix_seed(cfg.master_seed, SPLIT_SALT ^ job.replication as u64))?;
    Ok(Replication { ds, truth, split })
}

fn predictions(
    rep: &Replication,
    learner: &LearnerChoice,
    options: &SweepOptions,
    noise_seed: u64,
) -> Result<(NuisancePredictions, Option<FittedNuisances>)> {
    let (mut preds, fits) = match learner {
        LearnerChoice::Oracle => (rep.truth.oracle_predictions(rep.split.estimation_idx())?, None),
        LearnerChoice::Fitted(spec) => {
            let fits = fit_nuisances(&rep.ds, &rep.split, spec)?;
            (fits.predict(&rep.ds, rep.split.estimation_idx())?, Some(fits))
        }
    };
    if options.propensity_noise_sd > 0.0 {
        preds.corrupt_logits(options.propensity_noise_sd, noise_seed)?;
    }
    preds.apply_floor(options.propensity_floor)?;
    Ok((preds, fits))
}

fn training_moments(
    rep: &Replication,
    fits: Option<&FittedNuisances>,
    r: usize,
) -> Result<Vec<crate::score::Moments>> {
    let train = rep.split.training_idx();
    let labels: Vec<usize> = train.iter().map(|&m| rep.ds.d()[m]).collect();
    let probs = match fits {
        Some(f) => f.predict(&rep.ds, train)?.propensity().clone(),
        None => rep.truth.oracle_predictions(train)?.propensity().clone(),
    };
    (0..rep.ds.n_treatments())
        .map(|i| estimate_moments(&labels, &probs.column(i), i, r))
        .collect()
}

fn run_estimator(
    rep: &Replication,
    preds: &NuisancePredictions,
    fits: Option<&FittedNuisances>,
    kind: EstimatorKind,
    options: &SweepOptions,
    seed: u64,
) -> Result<crate::estimators::EstimateReport> {
    match kind {
        EstimatorKind::Dr => estimate_dr(&rep.ds, preds),
        EstimatorKind::Dml => estimate_dml(&rep.ds, preds),
        EstimatorKind::HigherOrder { r, k } => {
            let moments = match options.moments {
                MomentChoice::EstimationFold => MomentSource::EstimationFold,
                MomentChoice::TrainingFold => MomentSource::Supplied(training_moments(rep, fits, r.max(2))?),
            };
            let cfg = HigherOrderConfig { r, k, reps: options.resample_reps, seed, moments };
            estimate_higher_order(&rep.ds, preds, &cfg)
        }
    }
}

/// Runs one job for every learner and estimator. Failures become rows with
/// `epsilon_ate = NaN` and an error message; they never abort the job.
pub fn run_job(
    job: &SweepJob,
    learners: &[LearnerChoice],
    estimators: &[EstimatorKind],
    options: &SweepOptions,
) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(learners.len() * estimators.len());
    let failed = |learner: &LearnerChoice, kind: EstimatorKind, err: &Error| SweepRow {
        grid_value: job.grid_value,
        learner: learner.name().into(),
        estimator: kind,
        replication: job.replication,
        epsilon_ate: f64::NAN,
        dml_infinite: false,
        error: Some(err.to_string()),
    };
    let rep = match prepare(job, options) {
        Ok(r) => r,
        Err(e) => {
            for l in learners {
                rows.extend(estimators.iter().map(|&k| failed(l, k, &e)));
            }
            return rows;
        }
    };
    let eval_rows = match options.truth {
        TruthChoice::EstimationFold => rep.split.estimation_idx().to_vec(),
        TruthChoice::FullSample => (0..rep.ds.len()).collect(),
    };
    let truth = rep.ds.true_ate(&eval_rows).expect("simulated data carries truth");
    let job_seed = mix_seed(job.cfg.master_seed, (job.grid_index as u64) << 32 | job.replication as u64);

    for (li, learner) in learners.iter().enumerate() {
        let noise_seed = mix_seed(job_seed, NOISE_SALT ^ li as u64);
        let (preds, fits) = match predictions(&rep, learner, options, noise_seed) {
            Ok(p) => p,
            Err(e) => {
                rows.extend(estimators.iter().map(|&k| failed(learner, k, &e)));
                continue;
            }
        };
        let dml_infinite = estimate_dml(&rep.ds, &preds).is_ok_and(|r| !r.is_finite());
        for &kind in estimators {
            let seed = mix_seed(job_seed, RESAMPLE_SALT);
            let outcome = run_estimator(&rep, &preds, fits.as_ref(), kind, options, seed)
                .and_then(|report| relative_error(&report.ate_pairwise, &truth, job.replication));
            rows.push(match outcome {
                Ok(eps) => SweepRow {
                    grid_value: job.grid_value,
                    learner: learner.name().into(),
                    estimator: kind,
                    replication: job.replication,
                    epsilon_ate: eps,
                    dml_infinite,
                    error: None,
                },
                Err(e) => SweepRow { dml_infinite, ..failed(learner, kind, &e) },
            });
        }
    }
    rows
}

/// Every job of the sweep, serially, rows in job order.
pub fn run_sweep(
    base: &SimConfig,
    sweep: &SweepKind,
    learners: &[LearnerChoice],
    estimators: &[EstimatorKind],
    options: &SweepOptions,
) -> Result<SweepReport> {
    if learners.is_empty() || estimators.is_empty() {
        return Err(Error::InvalidInput("need at least one learner and one estimator".into()));
    }
    let jobs = sweep_jobs(base, sweep)?;
    let rows = jobs.iter().flat_map(|j| run_job(j, learners, estimators, options)).collect();
    Ok(SweepReport { rows })
}

/// Groups rows by `(grid value, learner, estimator)` in first-seen order.
/// With `skip_infinite_dml`, replications whose DML estimate was infinite are
/// left out of every group.
pub fn summarize(rows: &[SweepRow], skip_infinite_dml: bool) -> Vec<SweepSummary> {
    let mut keys: Vec<(f64, &str, EstimatorKind)> = Vec::new();
    for r in rows {
        let key = (r.grid_value, r.learner.as_str(), r.estimator);
        if !keys.iter().any(|k| k.0 == key.0 && k.1 == key.1 && k.2 == key.2) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(grid_value, learner, estimator)| {
            let group: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.grid_value == grid_value && r.learner == learner && r.estimator == estimator)
                .filter(|r| !(skip_infinite_dml && r.dml_infinite))
                .collect();
            let finite: Vec<f64> = group.iter().map(|r| r.epsilon_ate).filter(|e| e.is_finite()).collect();
            let mut acc = CompensatedSum::new();
            acc.extend(finite.iter().copied());
            SweepSummary {
                grid_value,
                learner: learner.into(),
                estimator,
                replications: group.len(),
                finite: finite.len(),
                failed: group.iter().filter(|r| r.error.is_some()).count(),
                mean: if finite.is_empty() { f64::NAN } else { acc.value() / finite.len() as f64 },
                median: if finite.is_empty() { f64::NAN } else { median(&finite) },
            }
        })
        .collect()
}
