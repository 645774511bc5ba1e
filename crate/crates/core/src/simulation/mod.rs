//! Synthetic data with a known effect.
//!
//! `Z ~ N(0, I_p)`; the treatment follows a softmax in the first `p * r_c`
//! covariates, `P(D = d^i | Z) ∝ exp(sum_k beta_ik Z_k)`; and the potential
//! outcomes are `Y^i = exp(sqrt(d_i)) (a_i^T Z + 1)^2 + xi^i` with
//! `xi^i ~ N(0, sigma_i^2)`.
//!
//! Random streams, all keyed by the master seed:
//!
//! * parameters: stream `1 << 63` for `beta`, `1 << 63 | 1` for `a`;
//! * replication `m`: stream `m << 8 | 0` for `Z`, `m << 8 | 1` for the
//!   treatment uniforms (one per unit, so `p` and `r_c` do not shift them) and
//!   `m << 8 | (2 + i)` for the noise of treatment `i`.

mod sweep;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use sweep::{
    run_job, run_sweep, summarize, sweep_jobs, LearnerChoice, MomentChoice, SweepJob, SweepKind, SweepOptions, SweepReport,
    SweepRow, SweepSummary, TruthChoice,
};

use crate::error::{Error, Result};
use crate::estimators::{Dataset, NuisancePredictions};
use crate::nuisance::{FeatureMatrix, ProbabilityMatrix};
use crate::numeric::{exp, mean, round, softmax_in_place, sqrt};
use crate::rng;

const PARAM_STREAM: u64 = 1 << 63;

/// Treatment levels `d_i` for three treatments.
pub const DEFAULT_D_LEVELS: [f64; 3] = [0.1, 0.5, 1.0];
/// Noise standard deviations for three treatments.
pub const DEFAULT_NOISE_SD: [f64; 3] = [3.0, 2.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub p: usize,
    /// Confounding ratio; `p * r_c` covariates drive the treatment.
    pub r_c: f64,
    /// Observations per dataset.
    pub q: usize,
    /// Replications.
    pub m: usize,
    /// `n_treatments x (p * r_c)`.
    pub beta: Vec<Vec<f64>>,
    /// `n_treatments x p`.
    pub outcome_coeffs: Vec<Vec<f64>>,
    pub d_levels: Vec<f64>,
    pub noise_sd: Vec<f64>,
    pub master_seed: u64,
}

/// Randomly drawn DGP parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpParams {
    pub beta: Vec<Vec<f64>>,
    pub outcome_coeffs: Vec<Vec<f64>>,
    pub d_levels: Vec<f64>,
    pub noise_sd: Vec<f64>,
}

/// `p * r_c` as an integer, if it is one (up to `1e-9`) and at least 1.
pub fn confounder_count(p: usize, r_c: f64) -> Result<usize> {
    if !(r_c > 0.0 && r_c <= 1.0) {
        return Err(Error::InvalidInput(format!("confounding ratio {r_c} outside (0, 1]")));
    }
    let x = p as f64 * r_c;
    let n = round(x);
    if (x - n).abs() > 1e-9 || n < 1.0 {
        return Err(Error::InvalidInput(format!("p * r_c = {x} is not a positive integer")));
    }
    Ok(n as usize)
}

/// `beta_ik ~ U(-0.1, 0.1)`, `a_i ~ U(0.1, 0.5)^p`. For three treatments
/// `d = (0.1, 0.5, 1)` and noise sd `(3, 2, 1)`; otherwise `d_i = (i + 1) / n`
/// and unit noise sd.
///
/// `beta` is drawn as a full `n x p` matrix and truncated to its first
/// `p * r_c` columns, so configurations that differ only in `r_c` share the
/// coefficients of their common covariates.
pub fn draw_default_params(p: usize, r_c: f64, n_treatments: usize, seed: u64) -> Result<DgpParams> {
    if p == 0 || n_treatments < 2 {
        return Err(Error::InvalidInput("need p >= 1 and at least two treatments".into()));
    }
    let pc = confounder_count(p, r_c)?;
    let mut rb = rng::stream(seed, PARAM_STREAM);
    let beta = (0..n_treatments)
        .map(|_| {
            let row: Vec<f64> = (0..p).map(|_| rb.random_range(-0.1..0.1)).collect();
            row[..pc].to_vec()
        })
        .collect();
    let mut ra = rng::stream(seed, PARAM_STREAM | 1);
    let outcome_coeffs = (0..n_treatments)
        .map(|_| (0..p).map(|_| ra.random_range(0.1..0.5)).collect())
        .collect();
    let (d_levels, noise_sd) = if n_treatments == 3 {
        (DEFAULT_D_LEVELS.to_vec(), DEFAULT_NOISE_SD.to_vec())
    } else {
        ((0..n_treatments).map(|i| (i + 1) as f64 / n_treatments as f64).collect(), vec![1.0; n_treatments])
    };
    Ok(DgpParams { beta, outcome_coeffs, d_levels, noise_sd })
}

impl SimConfig {
    /// Defaults drawn with [`draw_default_params`] from `seed`, which is also
    /// the master seed.
    pub fn with_defaults(p: usize, r_c: f64, n_treatments: usize, q: usize, m: usize, seed: u64) -> Result<Self> {
        let params = draw_default_params(p, r_c, n_treatments, seed)?;
        Self::from_params(p, r_c, q, m, params, seed)
    }

    pub fn from_params(p: usize, r_c: f64, q: usize, m: usize, params: DgpParams, master_seed: u64) -> Result<Self> {
        let cfg = Self {
            p,
            r_c,
            q,
            m,
            beta: params.beta,
            outcome_coeffs: params.outcome_coeffs,
            d_levels: params.d_levels,
            noise_sd: params.noise_sd,
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_treatments(&self) -> usize {
        self.beta.len()
    }

    pub fn n_confounders(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.beta.len();
        let pc = confounder_count(self.p, self.r_c)?;
        if n < 2 {
            return Err(Error::InvalidInput("need at least two treatments".into()));
        }
        if self.beta.iter().any(|b| b.len() != pc) {
            return Err(Error::InvalidInput(format!("beta rows must have p * r_c = {pc} entries")));
        }
        if self.outcome_coeffs.len() != n || self.outcome_coeffs.iter().any(|a| a.len() != self.p) {
            return Err(Error::InvalidInput("outcome coefficients must be n_treatments x p".into()));
        }
        if self.d_levels.len() != n || self.d_levels.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidInput("d levels must be positive, one per treatment".into()));
        }
        if self.noise_sd.len() != n || self.noise_sd.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidInput("noise sd must be positive, one per treatment".into()));
        }
        if self.q == 0 {
            return Err(Error::InvalidInput("Q must be positive".into()));
        }
        let all = self.beta.iter().flatten().chain(self.outcome_coeffs.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DGP coefficients"));
        }
        Ok(())
    }

    /// `P(D = d^i | z)` for every `i`.
    pub fn treatment_probabilities(&self, z: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .beta
            .iter()
            .map(|b| b.iter().zip(z).map(|(c, x)| c * x).sum())
            .collect();
        softmax_in_place(&mut out);
        out
    }

    /// `g^i(z) = exp(sqrt(d_i)) (a_i^T z + 1)^2`.
    pub fn outcome_mean(&self, treatment: usize, z: &[f64]) -> f64 {
        let lin: f64 = self.outcome_coeffs[treatment].iter().zip(z).map(|(a, x)| a * x).sum();
        exp(sqrt(self.d_levels[treatment])) * (lin + 1.0) * (lin + 1.0)
    }

    /// Population `theta^i = exp(sqrt(d_i)) (||a_i||^2 + 1)`.
    pub fn population_theta(&self) -> Vec<f64> {
        (0..self.n_treatments())
            .map(|i| {
                let norm2: f64 = self.outcome_coeffs[i].iter().map(|a| a * a).sum();
                exp(sqrt(self.d_levels[i])) * (norm2 + 1.0)
            })
            .collect()
    }
}

/// Ground truth of one generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// Mean of each column of `potential_means` over all units.
    pub theta: Vec<f64>,
    /// `potential_means[i][m] = g^i(Z_m)`.
    pub potential_means: Vec<Vec<f64>>,
    /// `potential_outcomes[i][m] = Y^i_m`.
    pub potential_outcomes: Vec<Vec<f64>>,
    /// True `pi^i(Z_m)`.
    pub propensities: ProbabilityMatrix,
}

impl SimTruth {
    pub fn theta_over(&self, rows: &[usize]) -> Vec<f64> {
        self.potential_means
            .iter()
            .map(|c| crate::numeric::sum(rows.iter().map(|&m| c[m])) / rows.len() as f64)
            .collect()
    }

    /// True nuisances on `rows`, in the form the estimators consume.
    pub fn oracle_predictions(&self, rows: &[usize]) -> Result<NuisancePredictions> {
        let outcome = self.potential_means.iter().map(|c| rows.iter().map(|&m| c[m]).collect()).collect();
        let k = self.propensities.n_classes();
        let mut values = Vec::with_capacity(rows.len() * k);
        for &m in rows {
            values.extend_from_slice(self.propensities.row(m));
        }
        NuisancePredictions::new(rows.to_vec(), outcome, ProbabilityMatrix::new(rows.len(), k, values)?)
    }
}

/// Inverse-CDF draw from `probs` with a uniform `u` in `[0, 1)`.
pub fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Treatment labels for covariates `z` given one uniform per unit.
pub fn assign_treatments(cfg: &SimConfig, z: &FeatureMatrix, uniforms: &[f64]) -> (Vec<usize>, ProbabilityMatrix) {
    let k = cfg.n_treatments();
    let mut probs = Vec::with_capacity(z.n_rows() * k);
    let labels = z
        .rows()
        .zip(uniforms)
        .map(|(row, &u)| {
            let p = cfg.treatment_probabilities(row);
            let label = inverse_cdf(&p, u);
            probs.extend_from_slice(&p);
            label
        })
        .collect();
    let probs = ProbabilityMatrix::new(z.n_rows(), k, probs).expect("softmax rows are probabilities");
    (labels, probs)
}

fn replication_stream(rep: usize, purpose: u64) -> u64 {
    ((rep as u64) << 8) | purpose
}

/// Replication `rep` of the DGP: a pure function of `(cfg, rep)`.
pub fn generate_dataset(cfg: &SimConfig, rep: usize) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let (q, p, n) = (cfg.q, cfg.p, cfg.n_treatments());
    let seed = cfg.master_seed;

    let mut rz = rng::stream(seed, replication_stream(rep, 0));
    let z: Vec<f64> = (0..q * p).map(|_| rng::standard_normal(&mut rz)).collect();
    let z = FeatureMatrix::new(q, p, z)?;

    let mut rd = rng::stream(seed, replication_stream(rep, 1));
    let uniforms: Vec<f64> = (0..q).map(|_| rng::uniform(&mut rd)).collect();
    let (d, propensities) = assign_treatments(cfg, &z, &uniforms);

    let mut potential_means = Vec::with_capacity(n);
    let mut potential_outcomes = Vec::with_capacity(n);
    for i in 0..n {
        let means: Vec<f64> = z.rows().map(|row| cfg.outcome_mean(i, row)).collect();
        let mut rn = rng::stream(seed, replication_stream(rep, 2 + i as u64));
        let outcomes: Vec<f64> = means.iter().map(|g| g + cfg.noise_sd[i] * rng::standard_normal(&mut rn)).collect();
        potential_means.push(means);
        potential_outcomes.push(outcomes);
    }
    let y: Vec<f64> = d.iter().enumerate().map(|(m, &label)| potential_outcomes[label][m]).collect();
    let theta = potential_means.iter().map(|c| mean(c)).collect();
    let ds = Dataset::with_truth(y, d, z, n, Some(potential_means.clone()))?;
    Ok((ds, SimTruth { theta, potential_means, potential_outcomes, propensities }))
}
