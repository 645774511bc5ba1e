//! Run configuration files (TOML).
//!
//! Every key is optional except where a subcommand needs it; unknown keys are
//! rejected. Validation reports every violation in one error rather than
//! stopping at the first.

use std::fmt;
use std::path::{Path, PathBuf};

use orthate::estimators::{EstimatorKind, SplitRatios};
use orthate::nuisance::{
    ClassifierSpec, ForestParams, LassoParams, LearnerSpec, LogisticParams, RegressorSpec,
};
use orthate::score::MAX_SCORE_ORDER;
use orthate::simulation::{MomentChoice, SweepKind, TruthChoice};
use serde::Deserialize;

use crate::dataio::ColumnMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn single(msg: impl Into<String>) -> Self {
        Self { violations: vec![msg.into()] }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    propensity_floor: Option<f64>,
    filter_infinite: Option<bool>,
    reps: Option<usize>,
    out: Option<PathBuf>,
    format: Option<String>,
    learners: Option<Vec<String>>,
    split: Option<RawSplit>,
    #[serde(default)]
    datasets: Vec<RawDataset>,
    #[serde(default)]
    estimators: Vec<RawEstimator>,
    columns: Option<RawColumns>,
    lasso: Option<RawLasso>,
    forest: Option<RawForest>,
    logistic: Option<RawLogistic>,
    simulation: Option<RawSimulation>,
    verify: Option<RawVerify>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    train: f64,
    valid: f64,
    test: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    path: PathBuf,
    name: Option<String>,
    n_treatments: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    kind: String,
    r: Option<usize>,
    k: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawColumns {
    y: Option<String>,
    d: Option<String>,
    z_prefix: Option<String>,
    mu_prefix: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLasso {
    lambda_grid: Option<Vec<f64>>,
    cv_folds: Option<usize>,
    max_iter: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForest {
    n_trees: Option<usize>,
    max_depth: Option<usize>,
    min_leaf: Option<usize>,
    max_features: Option<usize>,
    bootstrap: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLogistic {
    l2: Option<f64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    p: usize,
    r_c: f64,
    n_treatments: Option<usize>,
    q: usize,
    m: usize,
    seed: Option<u64>,
    oracle: Option<bool>,
    redraw_per_replication: Option<bool>,
    propensity_noise_sd: Option<f64>,
    moments: Option<String>,
    truth: Option<String>,
    confounding: Option<Vec<f64>>,
    dimension: Option<Vec<usize>>,
    samplesize: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    #[serde(default)]
    orders: Vec<[usize; 2]>,
    pi: Option<f64>,
    outcome_coeffs: Option<Vec<f64>>,
    noise_sd: Option<f64>,
    include_dml: Option<bool>,
    dml_first_order_only: Option<bool>,
    derivative_order: Option<usize>,
    n_draws: Option<usize>,
    seed: Option<u64>,
    coefficient_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    /// Resolved against the config file's directory.
    pub path: PathBuf,
    pub n_treatments: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub p: usize,
    pub r_c: f64,
    pub n_treatments: usize,
    pub q: usize,
    pub m: usize,
    pub seed: u64,
    pub oracle: bool,
    pub redraw_per_replication: bool,
    pub propensity_noise_sd: f64,
    pub moments: MomentChoice,
    pub truth: TruthChoice,
    pub confounding: Option<Vec<f64>>,
    pub dimension: Option<Vec<usize>>,
    pub samplesize: Option<Vec<usize>>,
}

impl SimulationSettings {
    /// The named grid, if the config defines it.
    pub fn grid(&self, name: &str) -> Option<SweepKind> {
        match name {
            "confounding" => self.confounding.clone().map(SweepKind::Confounding),
            "dimension" => self.dimension.clone().map(SweepKind::Dimension),
            "samplesize" => self.samplesize.clone().map(SweepKind::SampleSize),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub orders: Vec<(usize, usize)>,
    pub pi: f64,
    pub outcome_coeffs: Vec<f64>,
    pub noise_sd: f64,
    pub include_dml: bool,
    /// DML failures above first order are expected and do not fail the run.
    pub dml_first_order_only: bool,
    pub derivative_order: usize,
    pub n_draws: usize,
    pub seed: u64,
    pub coefficient_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub propensity_floor: f64,
    pub filter_infinite: bool,
    pub out: PathBuf,
    pub format: Format,
    pub split: SplitRatios,
    pub datasets: Vec<DatasetEntry>,
    pub estimators: Vec<EstimatorKind>,
    /// Resampling repetitions `R` for the higher-order estimators.
    pub reps: usize,
    pub learners: Vec<LearnerSpec>,
    pub columns: ColumnMap,
    pub simulation: Option<SimulationSettings>,
    pub verify: Option<VerifySettings>,
}

pub const DEFAULT_REPS: usize = 100;

fn check_order(r: usize, k: usize, what: &str, errs: &mut Vec<String>) {
    if k < 2 || k > r {
        errs.push(format!("{what}: k must satisfy 2 <= k <= r (got r = {r}, k = {k})"));
    } else if r > MAX_SCORE_ORDER {
        errs.push(format!("{what}: r = {r} exceeds the supported maximum {MAX_SCORE_ORDER}"));
    }
}

fn parse_learner(
    name: &str,
    lasso: &LassoParams,
    forest: &ForestParams,
    logistic: &LogisticParams,
) -> Option<LearnerSpec> {
    let (reg, cls) = name.split_once('+')?;
    let regressor = match reg {
        "lasso" => RegressorSpec::Lasso(lasso.clone()),
        "forest" => RegressorSpec::Forest(forest.clone()),
        "mean" => RegressorSpec::Mean,
        _ => return None,
    };
    let classifier = match cls {
        "logistic" => ClassifierSpec::Logistic(logistic.clone()),
        "forest" => ClassifierSpec::Forest(forest.clone()),
        "frequency" => ClassifierSpec::Frequency,
        _ => return None,
    };
    Some(LearnerSpec { regressor, classifier })
}

fn positive(v: Option<usize>, default: usize, what: &str, errs: &mut Vec<String>) -> usize {
    match v {
        Some(0) => {
            errs.push(format!("{what} must be positive"));
            default
        }
        Some(v) => v,
        None => default,
    }
}

fn resolve(p: PathBuf, base: &Path) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses and validates config text. Relative paths are resolved against
    /// `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::single(e.to_string()))?;
        let mut errs = Vec::new();
        let seed = raw.seed.unwrap_or(0);

        let propensity_floor = raw.propensity_floor.unwrap_or(0.0);
        if !(0.0..0.5).contains(&propensity_floor) {
            errs.push(format!("propensity_floor = {propensity_floor} must lie in [0, 0.5)"));
        }
        let format = match raw.format.as_deref() {
            None => Format::Csv,
            Some(s) => Format::parse(s).unwrap_or_else(|| {
                errs.push(format!("format `{s}` must be `csv` or `json`"));
                Format::Csv
            }),
        };
        let split = match raw.split {
            None => SplitRatios::default(),
            Some(s) => {
                let ratios = SplitRatios { train: s.train, valid: s.valid, test: s.test };
                if let Err(e) = ratios.validate() {
                    errs.push(format!("split: {e}"));
                }
                ratios
            }
        };

        let mut estimators = Vec::new();
        for (i, e) in raw.estimators.iter().enumerate() {
            let what = format!("estimators[{i}]");
            match e.kind.as_str() {
                "dr" | "dml" => {
                    if e.r.is_some() || e.k.is_some() {
                        errs.push(format!("{what}: `{}` takes no (r, k)", e.kind));
                    }
                    estimators.push(if e.kind == "dr" { EstimatorKind::Dr } else { EstimatorKind::Dml });
                }
                "higher-order" => match (e.r, e.k) {
                    (Some(r), Some(k)) => {
                        check_order(r, k, &what, &mut errs);
                        estimators.push(EstimatorKind::HigherOrder { r, k });
                    }
                    _ => errs.push(format!("{what}: higher-order needs both r and k")),
                },
                other => errs.push(format!("{what}: unknown kind `{other}` (dr, dml, higher-order)")),
            }
        }
        let reps = positive(raw.reps, DEFAULT_REPS, "reps", &mut errs);

        let lasso = match raw.lasso {
            None => LassoParams { seed, ..LassoParams::default() },
            Some(l) => {
                let d = LassoParams::default();
                let lambda_grid = l.lambda_grid.unwrap_or(d.lambda_grid);
                if lambda_grid.is_empty() || lambda_grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    errs.push("lasso.lambda_grid must be a non-empty list of positive penalties".into());
                }
                let cv_folds = l.cv_folds.unwrap_or(d.cv_folds);
                if cv_folds < 2 {
                    errs.push("lasso.cv_folds must be at least 2".into());
                }
                LassoParams {
                    lambda_grid,
                    cv_folds,
                    max_iter: positive(l.max_iter, d.max_iter, "lasso.max_iter", &mut errs),
                    tol: l.tol.unwrap_or(d.tol),
                    seed,
                }
            }
        };
        let forest = match raw.forest {
            None => ForestParams { seed, ..ForestParams::default() },
            Some(f) => {
                let d = ForestParams::default();
                ForestParams {
                    n_trees: positive(f.n_trees, d.n_trees, "forest.n_trees", &mut errs),
                    max_depth: f.max_depth.unwrap_or(d.max_depth),
                    min_leaf: positive(f.min_leaf, d.min_leaf, "forest.min_leaf", &mut errs),
                    max_features: match f.max_features {
                        Some(0) => {
                            errs.push("forest.max_features must be positive".into());
                            None
                        }
                        m => m,
                    },
                    bootstrap: f.bootstrap.unwrap_or(d.bootstrap),
                    seed,
                }
            }
        };
        let logistic = match raw.logistic {
            None => LogisticParams::default(),
            Some(l) => {
                let d = LogisticParams::default();
                let l2 = l.l2.unwrap_or(d.l2);
                if !(l2 >= 0.0) {
                    errs.push("logistic.l2 must be non-negative".into());
                }
                LogisticParams { l2, max_iter: positive(l.max_iter, d.max_iter, "logistic.max_iter", &mut errs), tol: l.tol.unwrap_or(d.tol) }
            }
        };
        let learner_names = raw.learners.unwrap_or_else(|| vec!["lasso+logistic".into()]);
        if learner_names.is_empty() {
            errs.push("learners must name at least one learner pair".into());
        }
        let mut learners = Vec::new();
        for name in &learner_names {
            match parse_learner(name, &lasso, &forest, &logistic) {
                Some(l) => learners.push(l),
                None => errs.push(format!(
                    "learner `{name}` must be <lasso|forest|mean>+<logistic|forest|frequency>"
                )),
            }
        }

        let mut datasets = Vec::new();
        for (i, d) in raw.datasets.into_iter().enumerate() {
            if d.n_treatments.is_some_and(|n| n < 2) {
                errs.push(format!("datasets[{i}]: n_treatments must be at least 2"));
            }
            let name = d.name.unwrap_or_else(|| {
                d.path.file_stem().map_or_else(|| format!("dataset{i}"), |s| s.to_string_lossy().into_owned())
            });
            if datasets.iter().any(|e: &DatasetEntry| e.name == name) {
                errs.push(format!("datasets[{i}]: duplicate name `{name}`"));
            }
            datasets.push(DatasetEntry { name, path: resolve(d.path, base_dir), n_treatments: d.n_treatments });
        }

        let columns = {
            let c = raw.columns.unwrap_or_default();
            let d = ColumnMap::default();
            ColumnMap {
                y: c.y.unwrap_or(d.y),
                d: c.d.unwrap_or(d.d),
                z_prefix: c.z_prefix.unwrap_or(d.z_prefix),
                mu_prefix: c.mu_prefix.unwrap_or(d.mu_prefix),
            }
        };

        let simulation = raw.simulation.map(|s| {
            let n_treatments = s.n_treatments.unwrap_or(3);
            if n_treatments < 2 {
                errs.push("simulation.n_treatments must be at least 2".into());
            }
            if let Err(e) = orthate::simulation::confounder_count(s.p, s.r_c) {
                errs.push(format!("simulation: {e}"));
            }
            if s.q == 0 || s.m == 0 {
                errs.push("simulation.q and simulation.m must be positive".into());
            }
            let noise = s.propensity_noise_sd.unwrap_or(0.0);
            if !(noise >= 0.0) || !noise.is_finite() {
                errs.push("simulation.propensity_noise_sd must be finite and non-negative".into());
            }
            let moments = match s.moments.as_deref() {
                None | Some("estimation") => MomentChoice::EstimationFold,
                Some("training") => MomentChoice::TrainingFold,
                Some(o) => {
                    errs.push(format!("simulation.moments `{o}` must be `estimation` or `training`"));
                    MomentChoice::EstimationFold
                }
            };
            let truth = match s.truth.as_deref() {
                None | Some("estimation") => TruthChoice::EstimationFold,
                Some("full") => TruthChoice::FullSample,
                Some(o) => {
                    errs.push(format!("simulation.truth `{o}` must be `estimation` or `full`"));
                    TruthChoice::EstimationFold
                }
            };
            for (name, empty) in [
                ("confounding", s.confounding.as_ref().is_some_and(Vec::is_empty)),
                ("dimension", s.dimension.as_ref().is_some_and(Vec::is_empty)),
                ("samplesize", s.samplesize.as_ref().is_some_and(Vec::is_empty)),
            ] {
                if empty {
                    errs.push(format!("simulation.{name} grid is empty"));
                }
            }
            SimulationSettings {
                p: s.p,
                r_c: s.r_c,
                n_treatments,
                q: s.q,
                m: s.m,
                seed: s.seed.unwrap_or(seed),
                oracle: s.oracle.unwrap_or(false),
                redraw_per_replication: s.redraw_per_replication.unwrap_or(false),
                propensity_noise_sd: noise,
                moments,
                truth,
                confounding: s.confounding,
                dimension: s.dimension,
                samplesize: s.samplesize,
            }
        });

        let verify = raw.verify.map(|v| {
            let orders: Vec<(usize, usize)> = v.orders.iter().map(|o| (o[0], o[1])).collect();
            for (i, &(r, k)) in orders.iter().enumerate() {
                check_order(r, k, &format!("verify.orders[{i}]"), &mut errs);
            }
            let pi = v.pi.unwrap_or(0.3);
            if !(pi > 0.0 && pi < 1.0) {
                errs.push(format!("verify.pi = {pi} must lie in (0, 1)"));
            }
            let derivative_order = v.derivative_order.unwrap_or(2);
            if !(1..=8).contains(&derivative_order) {
                errs.push("verify.derivative_order must lie in 1..=8".into());
            }
            let n_draws = v.n_draws.unwrap_or(200_000);
            if n_draws < 2 {
                errs.push("verify.n_draws must be at least 2".into());
            }
            VerifySettings {
                orders,
                pi,
                outcome_coeffs: v.outcome_coeffs.unwrap_or_else(|| vec![0.4, 0.2]),
                noise_sd: v.noise_sd.unwrap_or(1.0),
                include_dml: v.include_dml.unwrap_or(true),
                dml_first_order_only: v.dml_first_order_only.unwrap_or(true),
                derivative_order,
                n_draws,
                seed: v.seed.unwrap_or(seed),
                coefficient_tolerance: v.coefficient_tolerance.unwrap_or(1e-9),
            }
        });

        if !errs.is_empty() {
            return Err(ConfigError { violations: errs });
        }
        Ok(Self {
            seed,
            propensity_floor,
            filter_infinite: raw.filter_infinite.unwrap_or(false),
            out: resolve(raw.out.unwrap_or_else(|| PathBuf::from("out")), base_dir),
            format,
            split,
            datasets,
            estimators,
            reps,
            learners,
            columns,
            simulation,
            verify,
        })
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::single(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    RunConfig::from_toml_str(&text, base)
}
