//! Monte-Carlo check of the orthogonality conditions of a score.
//!
//! For a score `psi(W, theta, g, a)` the nuisances are perturbed along fixed
//! directions, `g + e1 * h_g(Z)` and `a + e2 * h_a(Z)`, and the mixed partial
//! derivative `d^{a1}_{e1} d^{a2}_{e2} E[psi]` at `e = 0` is estimated by a
//! tensor-product central finite difference applied draw by draw. The mean of
//! the per-draw differences estimates the derivative and their spread gives a
//! standard error. Moments enter the correction as fixed constants and are
//! not perturbed.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{binomial, powi, sigmoid, sqrt, exp, RunningStats};
use crate::rng;
use crate::score::{Correction, Moments};

/// Estimates smaller than this in magnitude are never flagged; finite
/// differences of exactly-zero derivatives leave rounding noise of this size.
pub const NUMERICAL_FLOOR: f64 = 1e-6;

/// Propensity perturbations are clamped to this interval.
pub const PROPENSITY_CLAMP: (f64, f64) = (0.01, 0.99);

const CHUNK: usize = 8192;

/// One draw of `(Z, 1{D = d^i}, Y^i)` together with the true nuisances.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDraw {
    pub z: Vec<f64>,
    pub treated: u8,
    /// Potential outcome `Y^i`.
    pub outcome: f64,
    /// `g^i(Z)`.
    pub outcome_mean: f64,
    /// `pi^i(Z)`.
    pub propensity: f64,
}

/// A data-generating process with known nuisances for a single treatment.
pub trait SyntheticModel {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelDraw;

    /// True `theta^i = E[g^i(Z)]`.
    fn theta(&self) -> f64;
}

/// `Z ~ N(0, I_p)`, `P(D = d^i | Z) = sigmoid(c0 + c1 * Z_1)`,
/// `Y^i = (a^T Z + 1)^2 + xi` with `xi ~ N(0, noise_sd^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliQuadraticModel {
    pub outcome_coeffs: Vec<f64>,
    pub propensity_intercept: f64,
    pub propensity_slope: f64,
    pub noise_sd: f64,
}

impl BernoulliQuadraticModel {
    /// Treatment independent of `Z` with probability `pi`.
    pub fn constant_propensity(pi: f64, outcome_coeffs: Vec<f64>, noise_sd: f64) -> Self {
        Self {
            outcome_coeffs,
            propensity_intercept: crate::numeric::ln(pi / (1.0 - pi)),
            propensity_slope: 0.0,
            noise_sd,
        }
    }

    pub fn propensity(&self, z: &[f64]) -> f64 {
        sigmoid(self.propensity_intercept + self.propensity_slope * z[0])
    }

    pub fn outcome_mean(&self, z: &[f64]) -> f64 {
        let lin: f64 = self.outcome_coeffs.iter().zip(z).map(|(a, x)| a * x).sum();
        (lin + 1.0) * (lin + 1.0)
    }

    /// `E_Z[f(pi(Z))]` by trapezoidal quadrature over `Z_1 ~ N(0, 1)`.
    fn expect_over_propensity(&self, f: impl Fn(f64) -> f64) -> f64 {
        if self.propensity_slope == 0.0 {
            return f(sigmoid(self.propensity_intercept));
        }
        let n = 4800;
        let lo = -12.0;
        let h = 24.0 / n as f64;
        let norm = 1.0 / sqrt(2.0 * core::f64::consts::PI);
        let mut acc = 0.0;
        for j in 0..=n {
            let z = lo + j as f64 * h;
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            acc += w * norm * exp(-0.5 * z * z) * f(sigmoid(self.propensity_intercept + self.propensity_slope * z));
        }
        acc * h
    }

    /// Unconditional residual moments `E[(1{D = d^i} - pi(Z))^q]`.
    pub fn exact_moments(&self, max_order: usize) -> Result<Moments> {
        let values = (1..=max_order)
            .map(|q| self.expect_over_propensity(|p| p * powi(1.0 - p, q) + (1.0 - p) * powi(-p, q)))
            .collect();
        Moments::new(values)
    }

    /// `E[1 / pi(Z)]`.
    pub fn mean_inverse_propensity(&self) -> f64 {
        self.expect_over_propensity(|p| 1.0 / p)
    }
}

impl SyntheticModel for BernoulliQuadraticModel {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelDraw {
        let z: Vec<f64> = (0..self.outcome_coeffs.len().max(1)).map(|_| rng::standard_normal(rng)).collect();
        let propensity = self.propensity(&z);
        let treated = u8::from(rng::uniform(rng) < propensity);
        let outcome_mean = self.outcome_mean(&z);
        let outcome = outcome_mean + self.noise_sd * rng::standard_normal(rng);
        ModelDraw { z, treated, outcome, outcome_mean, propensity }
    }

    fn theta(&self) -> f64 {
        self.outcome_coeffs.iter().map(|a| a * a).sum::<f64>() + 1.0
    }
}

/// Perturbation direction applied to both nuisances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `h(Z) = 1`.
    ConstantShift,
    /// `h(Z) = mean_j sigmoid(Z_j)`.
    Sigmoid,
}

impl Direction {
    fn value(self, z: &[f64]) -> f64 {
        match self {
            Direction::ConstantShift => 1.0,
            Direction::Sigmoid => z.iter().map(|&x| sigmoid(x)).sum::<f64>() / z.len() as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::ConstantShift => "constant",
            Direction::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityConfig {
    /// Highest total derivative order `a1 + a2` checked.
    pub order: usize,
    /// Finite-difference step.
    pub epsilon: f64,
    pub n_draws: usize,
    pub seed: u64,
    pub directions: Vec<Direction>,
}

impl Default for OrthogonalityConfig {
    fn default() -> Self {
        Self {
            order: 2,
            epsilon: 1e-3,
            n_draws: 200_000,
            seed: 0,
            directions: vec![Direction::ConstantShift, Direction::Sigmoid],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    /// `(a1, a2)`: derivative orders in the outcome regression and the propensity.
    pub alpha: (usize, usize),
    pub direction: Direction,
    pub estimate: f64,
    pub std_error: f64,
    /// `|estimate| > 3 SE` and above [`NUMERICAL_FLOOR`].
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    pub entries: Vec<DerivativeEstimate>,
}

impl OrthogonalityReport {
    pub fn violations(&self) -> impl Iterator<Item = &DerivativeEstimate> {
        self.entries.iter().filter(|e| e.violation)
    }

    /// No violations among derivatives of total order `<= order`.
    pub fn orthogonal_up_to(&self, order: usize) -> bool {
        self.entries.iter().filter(|e| e.alpha.0 + e.alpha.1 <= order).all(|e| !e.violation)
    }

    pub fn get(&self, alpha: (usize, usize), direction: Direction) -> Option<&DerivativeEstimate> {
        self.entries.iter().find(|e| e.alpha == alpha && e.direction == direction)
    }
}

/// Central difference stencil of order `n` with step `h`: offsets
/// `(n/2 - j) h` and weights `(-1)^j C(n, j) / h^n`, `j = 0..=n`.
fn stencil(n: usize, h: f64) -> Vec<(f64, f64)> {
    if n == 0 {
        return vec![(0.0, 1.0)];
    }
    let scale = powi(h, n);
    (0..=n)
        .map(|j| {
            let offset = (n as f64 / 2.0 - j as f64) * h;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            (offset, sign * binomial(n, j) as f64 / scale)
        })
        .collect()
}

/// Estimates every mixed Gateaux derivative of `E[psi]` with
/// `1 <= a1 + a2 <= cfg.order` at the true nuisances of `model`.
pub fn check_orthogonality<C, M>(score: &C, model: &M, cfg: &OrthogonalityConfig) -> Result<OrthogonalityReport>
where
    C: Correction + ?Sized,
    M: SyntheticModel,
{
    if cfg.order == 0 {
        return Err(Error::InvalidInput("derivative order must be at least 1".into()));
    }
    if cfg.order > 8 {
        return Err(Error::InvalidInput("derivative order above 8 is not supported".into()));
    }
    if !(cfg.epsilon > 0.0) || cfg.n_draws < 2 || cfg.directions.is_empty() {
        return Err(Error::InvalidInput("need epsilon > 0, at least two draws and one direction".into()));
    }

    let mut alphas = Vec::new();
    for total in 1..=cfg.order {
        for a1 in 0..=total {
            alphas.push((a1, total - a1));
        }
    }
    let stencils: Vec<Vec<(f64, f64)>> = (0..=cfg.order).map(|n| stencil(n, cfg.epsilon)).collect();
    let theta = model.theta();
    let n_entries = alphas.len() * cfg.directions.len();

    let mut stats = vec![RunningStats::new(); n_entries];
    let n_chunks = cfg.n_draws.div_ceil(CHUNK);
    for chunk in 0..n_chunks {
        let draws = CHUNK.min(cfg.n_draws - chunk * CHUNK);
        let mut rng = rng::stream(cfg.seed, chunk as u64);
        let mut local = vec![RunningStats::new(); n_entries];
        for _ in 0..draws {
            let d = model.draw(&mut rng);
            let t = f64::from(d.treated);
            for (di, &dir) in cfg.directions.iter().enumerate() {
                let h = dir.value(&d.z);
                for (ai, &(a1, a2)) in alphas.iter().enumerate() {
                    let mut fd = 0.0;
                    for &(e2, w2) in &stencils[a2] {
                        let a = (d.propensity + e2 * h).clamp(PROPENSITY_CLAMP.0, PROPENSITY_CLAMP.1);
                        let weight = score.weight(t, a);
                        for &(e1, w1) in &stencils[a1] {
                            let g = d.outcome_mean + e1 * h;
                            let psi = theta - g - (d.outcome - g) * weight;
                            fd += w1 * w2 * psi;
                        }
                    }
                    local[di * alphas.len() + ai].push(fd);
                }
            }
        }
        for (acc, part) in stats.iter_mut().zip(&local) {
            acc.merge(part);
        }
    }

    let mut entries = Vec::with_capacity(n_entries);
    for (di, &direction) in cfg.directions.iter().enumerate() {
        for (ai, &alpha) in alphas.iter().enumerate() {
            let s = &stats[di * alphas.len() + ai];
            let estimate = s.mean();
            let std_error = s.std_error();
            let violation = estimate.abs() > 3.0 * std_error && estimate.abs() > NUMERICAL_FLOOR;
            entries.push(DerivativeEstimate { alpha, direction, estimate, std_error, violation });
        }
    }
    Ok(OrthogonalityReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{compute_coefficients, DmlCorrection, HigherOrderCorrection};

    #[test]
    fn stencils_differentiate_polynomials_exactly() {
        for n in 1..=4 {
            let st = stencil(n, 0.1);
            // n-th derivative of x^n is n!
            let est: f64 = st.iter().map(|&(x, w)| w * powi(x, n)).sum();
            let fact: f64 = (1..=n).map(|v| v as f64).product();
            assert!((est - fact).abs() < 1e-9, "order {n}: {est}");
        }
    }

    #[test]
    fn outcome_derivatives_of_order_two_are_zero() {
        let model = BernoulliQuadraticModel::constant_propensity(0.3, vec![0.4, 0.2], 1.0);
        let m = model.exact_moments(2).unwrap();
        let c = compute_coefficients(2, 2, &m).unwrap();
        let cfg = OrthogonalityConfig { n_draws: 20_000, seed: 3, ..Default::default() };
        let report = check_orthogonality(&HigherOrderCorrection { coeffs: &c, moments: &m }, &model, &cfg).unwrap();
        for dir in [Direction::ConstantShift, Direction::Sigmoid] {
            let e = report.get((2, 0), dir).unwrap();
            assert!(e.estimate.abs() < NUMERICAL_FLOOR);
            assert!(!e.violation);
        }
    }

    #[test]
    fn dml_mixed_derivative_matches_closed_form() {
        let model = BernoulliQuadraticModel::constant_propensity(0.3, vec![0.4, 0.2], 1.0);
        let cfg = OrthogonalityConfig { n_draws: 50_000, seed: 11, ..Default::default() };
        let report = check_orthogonality(&DmlCorrection, &model, &cfg).unwrap();
        let e = report.get((1, 1), Direction::ConstantShift).unwrap();
        let expected = -model.mean_inverse_propensity();
        assert!((e.estimate - expected).abs() < 4.0 * e.std_error, "{} vs {}", e.estimate, expected);
        assert!(e.violation);
        assert!(report.orthogonal_up_to(1));
    }

    #[test]
    fn quadrature_moments_match_constant_case() {
        let mut model = BernoulliQuadraticModel::constant_propensity(0.3, vec![0.5], 1.0);
        let exact = model.exact_moments(4).unwrap();
        let b = Moments::bernoulli(0.3, 4).unwrap();
        for q in 1..=4 {
            assert!((exact.get(q) - b.get(q)).abs() < 1e-15);
        }
        // tiny slope: quadrature should stay close to the constant case
        model.propensity_slope = 1e-6;
        let near = model.exact_moments(4).unwrap();
        for q in 1..=4 {
            assert!((near.get(q) - b.get(q)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let model = BernoulliQuadraticModel::constant_propensity(0.3, vec![0.5], 1.0);
        let cfg = OrthogonalityConfig { order: 0, ..Default::default() };
        assert!(check_orthogonality(&DmlCorrection, &model, &cfg).is_err());
    }
}
