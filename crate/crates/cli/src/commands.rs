//! The subcommands. Each returns the process exit status; results go to files
//! and a short summary goes to stdout.

use std::fmt::Write as _;
use std::path::PathBuf;

use orthate::estimators::{
    estimate_dml, estimate_dr, estimate_higher_order, fit_nuisances, make_split, relative_error,
    EstimateReport, EstimatorKind, HigherOrderConfig, MomentSource,
};
use orthate::nuisance::{ClassifierSpec, LearnerSpec, RegressorSpec};
use orthate::orthogonality::{check_orthogonality, BernoulliQuadraticModel, OrthogonalityConfig};
use orthate::rng::mix_seed;
use orthate::score::{compute_coefficients, solve_coefficients_oracle, DmlCorrection, HigherOrderCorrection};
use orthate::simulation::{
    generate_dataset, run_job, summarize, sweep_jobs, LearnerChoice, SimConfig, SweepOptions, SweepRow,
};
use rayon::prelude::*;

use crate::config::{Format, RunConfig};
use crate::dataio::load_csv_dataset;
use crate::report::{format_number, render_text, write_report, write_table, Cell, Table};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "ORTHATE_WORKERS";

pub const SWEEP_NAMES: [&str; 3] = ["confounding", "dimension", "samplesize"];

const SPLIT_SALT: u64 = 0x6573_7473_706c;
const RESAMPLE_SALT: u64 = 0x6573_7472_6573;

/// A failure that stops the command before any result is produced.
#[derive(Debug)]
pub struct CommandError {
    pub code: u8,
    pub message: String,
}

impl CommandError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn io(e: std::io::Error) -> Self {
        Self { code: EXIT_PARTIAL, message: format!("writing reports: {e}") }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub propensity_floor: Option<f64>,
    pub filter_infinite: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CommandError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
            for l in &mut cfg.learners {
                if let RegressorSpec::Lasso(p) = &mut l.regressor {
                    p.seed = s;
                }
                if let RegressorSpec::Forest(p) = &mut l.regressor {
                    p.seed = s;
                }
                if let ClassifierSpec::Forest(p) = &mut l.classifier {
                    p.seed = s;
                }
            }
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        if let Some(f) = self.propensity_floor {
            if !(0.0..0.5).contains(&f) {
                return Err(CommandError::config(format!("--propensity-floor {f} must lie in [0, 0.5)")));
            }
            cfg.propensity_floor = f;
        }
        cfg.filter_infinite |= self.filter_infinite;
        Ok(())
    }
}

fn pool() -> Result<rayon::ThreadPool, CommandError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CommandError::config(format!("{WORKERS_ENV}=`{v}` is not a positive integer")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CommandError::config(format!("worker pool: {e}")))
}

struct LearnerOutcome {
    learner: &'static str,
    reports: Vec<EstimateReport>,
    /// Per estimator, `None` without ground truth.
    errors: Vec<Option<f64>>,
}

struct DatasetOutcome {
    name: String,
    /// Per learner in config order.
    learners: Vec<Result<LearnerOutcome, String>>,
    load_error: Option<String>,
}

fn run_learner(
    cfg: &RunConfig,
    ds: &orthate::estimators::Dataset,
    split: &orthate::estimators::SplitPlan,
    spec: &LearnerSpec,
    dataset_index: usize,
) -> Result<LearnerOutcome, String> {
    let fits = fit_nuisances(ds, split, spec).map_err(|e| e.to_string())?;
    let mut preds = fits.predict(ds, split.estimation_idx()).map_err(|e| e.to_string())?;
    preds.apply_floor(cfg.propensity_floor).map_err(|e| e.to_string())?;
    let truth = ds.true_ate(split.estimation_idx());
    let mut reports = Vec::with_capacity(cfg.estimators.len());
    let mut errors = Vec::with_capacity(cfg.estimators.len());
    for kind in &cfg.estimators {
        let rep = match *kind {
            EstimatorKind::Dr => estimate_dr(ds, &preds),
            EstimatorKind::Dml => estimate_dml(ds, &preds),
            EstimatorKind::HigherOrder { r, k } => {
                let hc = HigherOrderConfig {
                    r,
                    k,
                    reps: cfg.reps,
                    seed: mix_seed(mix_seed(cfg.seed, dataset_index as u64), RESAMPLE_SALT),
                    moments: MomentSource::EstimationFold,
                };
                estimate_higher_order(ds, &preds, &hc)
            }
        }
        .map_err(|e| format!("{}: {e}", kind.label()))?;
        let err = match &truth {
            Some(t) => Some(relative_error(&rep.ate_pairwise, t, dataset_index).map_err(|e| e.to_string())?),
            None => None,
        };
        reports.push(rep);
        errors.push(err);
    }
    Ok(LearnerOutcome { learner: spec.name(), reports, errors })
}

fn run_dataset(cfg: &RunConfig, index: usize) -> DatasetOutcome {
    let entry = &cfg.datasets[index];
    let ds = match load_csv_dataset(&entry.path, &cfg.columns, entry.n_treatments) {
        Ok(ds) => ds,
        Err(e) => {
            return DatasetOutcome {
                name: entry.name.clone(),
                learners: Vec::new(),
                load_error: Some(format!("{}: {e}", entry.path.display())),
            }
        }
    };
    let split = match make_split(ds.len(), cfg.split, mix_seed(mix_seed(cfg.seed, index as u64), SPLIT_SALT)) {
        Ok(s) => s,
        Err(e) => return DatasetOutcome { name: entry.name.clone(), learners: Vec::new(), load_error: Some(e.to_string()) },
    };
    let learners = cfg.learners.iter().map(|spec| run_learner(cfg, &ds, &split, spec, index)).collect();
    DatasetOutcome { name: entry.name.clone(), learners, load_error: None }
}

/// Mean over datasets of one `(learner, estimator)` error column.
fn mean_error(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// `(eps_x - eps_ours) / eps_x`; undefined when `eps_x` is not finite or zero.
fn reduction(eps_x: Option<f64>, ours: Option<f64>) -> Cell {
    match (eps_x, ours) {
        (Some(x), Some(o)) if x.is_finite() && x != 0.0 => Cell::Num((x - o) / x),
        (Some(_), Some(_)) => Cell::Undefined,
        _ => Cell::Empty,
    }
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<u8, CommandError> {
    if cfg.datasets.is_empty() {
        return Err(CommandError::config("estimate needs at least one [[datasets]] entry"));
    }
    if cfg.estimators.is_empty() {
        return Err(CommandError::config("estimate needs at least one [[estimators]] entry"));
    }
    let outcomes: Vec<DatasetOutcome> =
        pool()?.install(|| (0..cfg.datasets.len()).into_par_iter().map(|i| run_dataset(cfg, i)).collect());

    let labels: Vec<String> = cfg.estimators.iter().map(EstimatorKind::label).collect();
    let mut estimates = Table::new("estimates", &["dataset", "learner", "estimator", "treatment", "theta"]);
    let mut per_dataset =
        Table::new("datasets", &["dataset", "learner", "estimator", "epsilon_ate", "finite", "floored"]);
    let mut failures = Table::new("failures", &["dataset", "learner", "error"]);
    for o in &outcomes {
        if let Some(e) = &o.load_error {
            failures.push(vec![o.name.as_str().into(), Cell::Empty, e.as_str().into()]);
            eprintln!("dataset {}: {e}", o.name);
        }
        for (spec, res) in cfg.learners.iter().zip(&o.learners) {
            match res {
                Err(e) => {
                    failures.push(vec![o.name.as_str().into(), spec.name().into(), e.as_str().into()]);
                    eprintln!("dataset {} with {}: {e}", o.name, spec.name());
                }
                Ok(lo) => {
                    for ((rep, err), label) in lo.reports.iter().zip(&lo.errors).zip(&labels) {
                        for (i, t) in rep.theta.iter().enumerate() {
                            estimates.push(vec![
                                o.name.as_str().into(),
                                lo.learner.into(),
                                label.as_str().into(),
                                i.into(),
                                (*t).into(),
                            ]);
                        }
                        per_dataset.push(vec![
                            o.name.as_str().into(),
                            lo.learner.into(),
                            label.as_str().into(),
                            (*err).into(),
                            rep.is_finite().into(),
                            rep.diagnostics.floored.into(),
                        ]);
                    }
                }
            }
        }
    }

    let dr = cfg.estimators.iter().position(|k| *k == EstimatorKind::Dr);
    let dml = cfg.estimators.iter().position(|k| *k == EstimatorKind::Dml);
    let ours = cfg.estimators.iter().position(|k| matches!(k, EstimatorKind::HigherOrder { .. }));
    let mut columns: Vec<String> = vec!["learner".into(), "datasets".into(), "excluded".into()];
    columns.extend(labels.iter().map(|l| format!("eps_{l}")));
    columns.push("r_dr".into());
    columns.push("r_dml".into());
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut summary = Table::new("summary", &column_refs);
    for (li, spec) in cfg.learners.iter().enumerate() {
        let usable: Vec<&LearnerOutcome> =
            outcomes.iter().filter_map(|o| o.learners.get(li).and_then(|r| r.as_ref().ok())).collect();
        let kept: Vec<&&LearnerOutcome> = usable
            .iter()
            .filter(|lo| !cfg.filter_infinite || dml.is_none_or(|j| lo.reports[j].is_finite()))
            .collect();
        let means: Vec<Option<f64>> = (0..labels.len())
            .map(|j| {
                let vals: Option<Vec<f64>> = kept.iter().map(|lo| lo.errors[j]).collect();
                vals.and_then(|v| mean_error(&v))
            })
            .collect();
        let pick = |idx: Option<usize>| idx.and_then(|j| means[j]);
        let mut row: Vec<Cell> = vec![spec.name().into(), kept.len().into(), (usable.len() - kept.len()).into()];
        row.extend(means.iter().map(|&m| Cell::from(m)));
        row.push(reduction(pick(dr), pick(ours)));
        row.push(reduction(pick(dml), pick(ours)));
        summary.push(row);
    }

    let tables = [estimates, per_dataset, summary, failures];
    let paths = write_report(&tables, &cfg.out, cfg.format).map_err(CommandError::io)?;
    print!("{}", render_text(&tables[2]));
    if cfg.filter_infinite {
        println!("(datasets with an infinite DML estimate excluded from the aggregate)");
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(if tables[3].rows.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn sweep_learners(cfg: &RunConfig, oracle: bool) -> Vec<LearnerChoice> {
    if oracle {
        vec![LearnerChoice::Oracle]
    } else {
        cfg.learners.iter().cloned().map(LearnerChoice::Fitted).collect()
    }
}

fn base_sim(cfg: &RunConfig) -> Result<(SimConfig, &crate::config::SimulationSettings), CommandError> {
    let sim = cfg.simulation.as_ref().ok_or_else(|| CommandError::config("missing [simulation] section"))?;
    let base = SimConfig::with_defaults(sim.p, sim.r_c, sim.n_treatments, sim.q, sim.m, sim.seed)
        .map_err(|e| CommandError::config(format!("simulation: {e}")))?;
    Ok((base, sim))
}

fn sweep_row_cells(r: &SweepRow) -> Vec<Cell> {
    vec![
        r.grid_value.into(),
        r.learner.as_str().into(),
        r.estimator.label().into(),
        r.replication.into(),
        r.epsilon_ate.into(),
        r.dml_infinite.into(),
        r.error.as_deref().map_or(Cell::Empty, Cell::from),
    ]
}

pub fn cmd_sweep(cfg: &RunConfig, name: &str) -> Result<u8, CommandError> {
    if !SWEEP_NAMES.contains(&name) {
        return Err(CommandError::config(format!("unknown sweep `{name}` (expected one of {})", SWEEP_NAMES.join(", "))));
    }
    if cfg.estimators.is_empty() {
        return Err(CommandError::config("sweep needs at least one [[estimators]] entry"));
    }
    let (base, sim) = base_sim(cfg)?;
    let grid = sim.grid(name).ok_or_else(|| CommandError::config(format!("[simulation] has no `{name}` grid")))?;
    let jobs = sweep_jobs(&base, &grid).map_err(|e| CommandError::config(e.to_string()))?;
    let learners = sweep_learners(cfg, sim.oracle);
    let options = SweepOptions {
        ratios: cfg.split,
        redraw_per_replication: sim.redraw_per_replication,
        propensity_floor: cfg.propensity_floor,
        propensity_noise_sd: sim.propensity_noise_sd,
        resample_reps: cfg.reps,
        moments: sim.moments,
        truth: sim.truth,
    };
    let rows: Vec<SweepRow> = pool()?.install(|| {
        jobs.par_iter().map(|j| run_job(j, &learners, &cfg.estimators, &options)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();

    let mut long = Table::new(
        &format!("sweep_{name}"),
        &["grid_value", "learner", "estimator", "replication", "epsilon_ate", "dml_infinite", "error"],
    );
    rows.iter().for_each(|r| long.push(sweep_row_cells(r)));
    let mut summary = Table::new(
        &format!("sweep_{name}_summary"),
        &["grid_value", "learner", "estimator", "replications", "finite", "failed", "mean", "median"],
    );
    for s in summarize(&rows, cfg.filter_infinite) {
        summary.push(vec![
            s.grid_value.into(),
            s.learner.into(),
            s.estimator.label().into(),
            s.replications.into(),
            s.finite.into(),
            s.failed.into(),
            s.mean.into(),
            s.median.into(),
        ]);
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let mut paths = write_report(&[long, summary.clone()], &cfg.out, cfg.format).map_err(CommandError::io)?;
    // The aggregate is always available as JSON for downstream plotting.
    if cfg.format == Format::Csv {
        let path = cfg.out.join(format!("{}.json", summary.name));
        write_table(&summary, &path, Format::Json).map_err(CommandError::io)?;
        paths.push(path);
    }
    print!("{}", render_text(&summary));
    for p in &paths {
        println!("wrote {}", p.display());
    }
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see the error column", rows.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

/// Writes every replication of the `[simulation]` base configuration as a
/// dataset file with `mu` columns.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<u8, CommandError> {
    let (base, _) = base_sim(cfg)?;
    std::fs::create_dir_all(&cfg.out).map_err(CommandError::io)?;
    let width = (base.m.max(1) - 1).to_string().len();
    for rep in 0..base.m {
        let (ds, _) = generate_dataset(&base, rep).map_err(|e| CommandError { code: EXIT_PARTIAL, message: e.to_string() })?;
        let mut w = csv::Writer::from_path(cfg.out.join(format!("sim_{rep:0width$}.csv")))
            .map_err(|e| CommandError::io(e.into()))?;
        let mut header = vec!["y".to_string(), "d".to_string()];
        header.extend((1..=ds.n_features()).map(|j| format!("z{j}")));
        header.extend((0..ds.n_treatments()).map(|i| format!("mu{i}")));
        w.write_record(&header).map_err(|e| CommandError::io(e.into()))?;
        let truth = ds.truth().expect("simulated data carries its truth");
        for m in 0..ds.len() {
            let mut rec = vec![format_number(ds.y()[m]), ds.d()[m].to_string()];
            rec.extend(ds.z().row(m).iter().map(|v| format_number(*v)));
            rec.extend(truth.iter().map(|c| format_number(c[m])));
            w.write_record(&rec).map_err(|e| CommandError::io(e.into()))?;
        }
        w.flush().map_err(CommandError::io)?;
    }
    println!("wrote {} datasets to {}", base.m, cfg.out.display());
    Ok(EXIT_OK)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<u8, CommandError> {
    let v = cfg.verify.as_ref().ok_or_else(|| CommandError::config("missing [verify] section"))?;
    if v.orders.is_empty() {
        return Err(CommandError::config("verify.orders lists no (r, k) pairs"));
    }
    let model = BernoulliQuadraticModel::constant_propensity(v.pi, v.outcome_coeffs.clone(), v.noise_sd);
    let max_r = v.orders.iter().map(|o| o.0).max().unwrap_or(2);
    let moments = model.exact_moments(max_r).map_err(|e| CommandError::config(e.to_string()))?;
    let verify_err = |e: orthate::Error| CommandError { code: EXIT_VERIFY, message: e.to_string() };

    let mut coeff_table = Table::new("coefficients", &["r", "k", "max_abs_diff", "tolerance", "pass"]);
    let mut all_pass = true;
    for &(r, k) in &v.orders {
        let fast = compute_coefficients(r, k, &moments).map_err(verify_err)?.to_vec();
        let slow = solve_coefficients_oracle(r, k, &moments).map_err(verify_err)?.to_vec();
        let scale = fast.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        let diff = fast.iter().zip(&slow).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let pass = diff <= v.coefficient_tolerance * scale;
        all_pass &= pass;
        coeff_table.push(vec![r.into(), k.into(), diff.into(), (v.coefficient_tolerance * scale).into(), pass.into()]);
    }

    let ocfg = OrthogonalityConfig { order: v.derivative_order, n_draws: v.n_draws, seed: v.seed, ..Default::default() };
    let mut scores: Vec<(String, usize, orthate::orthogonality::OrthogonalityReport)> = Vec::new();
    for &(r, k) in &v.orders {
        let c = compute_coefficients(r, k, &moments).map_err(verify_err)?;
        let rep = check_orthogonality(&HigherOrderCorrection { coeffs: &c, moments: &moments }, &model, &ocfg)
            .map_err(verify_err)?;
        scores.push((format!("ho({r},{k})"), k, rep));
    }
    if v.include_dml {
        let rep = check_orthogonality(&DmlCorrection, &model, &ocfg).map_err(verify_err)?;
        let claimed = if v.dml_first_order_only { 1 } else { v.derivative_order };
        scores.push(("dml".into(), claimed, rep));
    }

    let mut detail = Table::new(
        "orthogonality",
        &["score", "alpha_outcome", "alpha_propensity", "direction", "estimate", "std_error", "violation", "status"],
    );
    let mut matrix_cols = vec!["score".to_string(), "claimed_order".to_string()];
    matrix_cols.extend((1..=v.derivative_order).map(|o| format!("order_{o}")));
    let refs: Vec<&str> = matrix_cols.iter().map(String::as_str).collect();
    let mut matrix = Table::new("orthogonality_matrix", &refs);
    for (name, claimed, rep) in &scores {
        for e in &rep.entries {
            let total = e.alpha.0 + e.alpha.1;
            let status = match (e.violation, total <= *claimed) {
                (false, _) => "pass",
                (true, true) => "fail",
                (true, false) => "expected",
            };
            all_pass &= status != "fail";
            detail.push(vec![
                name.as_str().into(),
                e.alpha.0.into(),
                e.alpha.1.into(),
                e.direction.name().into(),
                e.estimate.into(),
                e.std_error.into(),
                e.violation.into(),
                status.into(),
            ]);
        }
        let mut row: Vec<Cell> = vec![name.as_str().into(), (*claimed).into()];
        for order in 1..=v.derivative_order {
            let mut at = rep.entries.iter().filter(|e| e.alpha.0 + e.alpha.1 == order);
            let violated = at.any(|e| e.violation);
            let cell = match (violated, order <= *claimed) {
                (false, _) => "pass",
                (true, true) => "FAIL",
                (true, false) => "nonzero (expected)",
            };
            row.push(cell.into());
        }
        matrix.push(row);
    }

    let tables = [coeff_table, detail, matrix];
    let paths = write_report(&tables, &cfg.out, cfg.format).map_err(CommandError::io)?;
    let mut out = String::new();
    let _ = writeln!(out, "coefficient recursion vs dense solve:");
    out.push_str(&render_text(&tables[0]));
    let _ = writeln!(out, "\northogonality (derivatives of E[psi] at the true nuisances):");
    out.push_str(&render_text(&tables[2]));
    print!("{out}");
    for p in &paths {
        println!("wrote {}", p.display());
    }
    if all_pass {
        Ok(EXIT_OK)
    } else {
        eprintln!("verification failed");
        Ok(EXIT_VERIFY)
    }
}
