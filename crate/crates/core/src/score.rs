//! The k-th order orthogonal score for `theta^i = E[g(d^i, Z)]`.
//!
//! With treatment residual `nu = 1{D = d^i} - a(Z)` the score is
//!
//! ```text
//! psi = theta - g(Z) - (Y^i - g(Z)) * A(D, Z; a)
//! A   = bbar_r * nu^r + sum_{q=1}^{k-1} b_q * (nu^q - E[nu^q])
//! ```
//!
//! `bbar_r = 1 / E[nu^r]` and the `b_q` follow a descending recursion in the
//! residual moments ([`compute_coefficients`]). [`solve_coefficients_oracle`]
//! obtains the same coefficients from the underlying linear system with a
//! dense solve and exists to cross-check the recursion.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{binomial, powi, solve_dense, MAX_BINOMIAL};

/// `|E[nu^r]|` below this is treated as zero.
pub const EPSILON_MOMENT: f64 = 1e-8;

/// Largest supported `r`.
pub const MAX_SCORE_ORDER: usize = MAX_BINOMIAL;

const MOMENT_SLACK: f64 = 1e-12;

/// Residual moments `E[nu^q]` for `q = 1..=max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    values: Vec<f64>,
}

impl Moments {
    /// `values[q - 1]` holds `E[nu^q]`.
    ///
    /// Rejects empty or non-finite input, magnitudes above one, and negative
    /// even moments. A zero second moment is accepted here; it surfaces as
    /// [`Error::DegenerateMoment`] when coefficients are built.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidMoments("at least one moment is required".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            let q = i + 1;
            if !v.is_finite() {
                return Err(Error::InvalidMoments(format!("E[nu^{q}] is not finite")));
            }
            if v.abs() > 1.0 + MOMENT_SLACK {
                return Err(Error::InvalidMoments(format!("|E[nu^{q}]| = {} exceeds 1", v.abs())));
            }
            if q % 2 == 0 && v < 0.0 {
                return Err(Error::InvalidMoments(format!("even moment E[nu^{q}] is negative")));
            }
        }
        Ok(Self { values })
    }

    /// Sample moments of a set of residuals.
    pub fn from_residuals(residuals: &[f64], max_order: usize) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::InvalidMoments("no residuals".into()));
        }
        if max_order == 0 {
            return Err(Error::InvalidMoments("max_order must be positive".into()));
        }
        let mut sums = vec![crate::numeric::CompensatedSum::new(); max_order];
        for &v in residuals {
            let mut p = 1.0;
            for acc in sums.iter_mut() {
                p *= v;
                acc.add(p);
            }
        }
        let n = residuals.len() as f64;
        Self::new(sums.iter().map(|s| s.value() / n).collect())
    }

    /// Exact moments of `1{D = d} - pi` when `D = d` with probability `pi`.
    pub fn bernoulli(pi: f64, max_order: usize) -> Result<Self> {
        Self::bernoulli_mixture(&[pi], &[1.0], max_order)
    }

    /// Exact moments when the propensity is itself drawn from a discrete
    /// mixture: `E[nu^q] = sum_j w_j (pi_j (1 - pi_j)^q + (1 - pi_j)(-pi_j)^q)`.
    pub fn bernoulli_mixture(pis: &[f64], weights: &[f64], max_order: usize) -> Result<Self> {
        if pis.is_empty() || pis.len() != weights.len() {
            return Err(Error::InvalidMoments("mixture needs matching non-empty components".into()));
        }
        if pis.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidMoments("mixture propensities must lie in [0, 1]".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidMoments("mixture weights must be non-negative with positive sum".into()));
        }
        let values = (1..=max_order)
            .map(|q| {
                pis.iter()
                    .zip(weights)
                    .map(|(&p, &w)| w * (p * powi(1.0 - p, q) + (1.0 - p) * powi(-p, q)))
                    .sum::<f64>()
                    / total
            })
            .collect();
        Self::new(values)
    }

    pub fn max_order(&self) -> usize {
        self.values.len()
    }

    /// `E[nu^q]`, with `E[nu^0] = 1`.
    ///
    /// # Panics
    ///
    /// Panics if `q > max_order`.
    #[inline]
    pub fn get(&self, q: usize) -> f64 {
        if q == 0 {
            1.0
        } else {
            self.values[q - 1]
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Coefficients `(bbar_r, b_1, ..., b_{k-1})` of the correction term.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoCoefficients {
    r: usize,
    k: usize,
    bar_b_r: f64,
    b: Vec<f64>,
}

impl OrthoCoefficients {
    /// Builds coefficients from raw parts without checking them against any
    /// moments. `b[q - 1]` is `b_q`.
    pub fn from_parts(r: usize, k: usize, bar_b_r: f64, b: Vec<f64>) -> Result<Self> {
        validate_orders(r, k)?;
        if b.len() != k - 1 {
            return Err(Error::InvalidInput(format!("expected {} b coefficients, got {}", k - 1, b.len())));
        }
        Ok(Self { r, k, bar_b_r, b })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bar_b_r(&self) -> f64 {
        self.bar_b_r
    }

    /// `b_q` for `1 <= q <= k - 1`.
    pub fn b(&self, q: usize) -> f64 {
        self.b[q - 1]
    }

    pub fn b_slice(&self) -> &[f64] {
        &self.b
    }

    /// All coefficients as `[bbar_r, b_1, ..., b_{k-1}]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k);
        out.push(self.bar_b_r);
        out.extend_from_slice(&self.b);
        out
    }

    /// `A` as a polynomial in the residual `v = t - a`.
    pub fn correction_at(&self, residual: f64, moments: &Moments) -> f64 {
        let mut acc = self.bar_b_r * powi(residual, self.r);
        let mut p = 1.0;
        for (i, &bq) in self.b.iter().enumerate() {
            p *= residual;
            acc += bq * (p - moments.get(i + 1));
        }
        acc
    }

    /// `d^j A / d a^j` at residual `v = t - a` (each derivative in `a`
    /// contributes a factor of `-1`).
    pub fn correction_derivative(&self, residual: f64, order: usize) -> f64 {
        if order == 0 {
            panic!("use correction_at for the zeroth derivative");
        }
        let falling = |n: usize| -> f64 { (0..order).map(|j| (n - j) as f64).product() };
        let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
        let mut acc = 0.0;
        if self.r >= order {
            acc += self.bar_b_r * falling(self.r) * powi(residual, self.r - order);
        }
        for (i, &bq) in self.b.iter().enumerate() {
            let q = i + 1;
            if q >= order {
                acc += bq * falling(q) * powi(residual, q - order);
            }
        }
        sign * acc
    }
}

fn validate_orders(r: usize, k: usize) -> Result<()> {
    if k < 2 || k > r {
        return Err(Error::InvalidOrder(format!("k must satisfy 2 <= k <= r (got r = {r}, k = {k})")));
    }
    if r > MAX_SCORE_ORDER {
        return Err(Error::InvalidOrder(format!("r = {r} exceeds the supported maximum {MAX_SCORE_ORDER}")));
    }
    Ok(())
}

fn check_preconditions(r: usize, k: usize, moments: &Moments) -> Result<()> {
    validate_orders(r, k)?;
    if r > moments.max_order() {
        return Err(Error::InvalidOrder(format!(
            "r = {r} needs moments up to order {r}, only {} supplied",
            moments.max_order()
        )));
    }
    let mr = moments.get(r);
    if mr.abs() < EPSILON_MOMENT {
        return Err(Error::DegenerateMoment { order: r, value: mr, threshold: EPSILON_MOMENT });
    }
    Ok(())
}

/// Coefficients by the descending recursion
/// `b_q = -sum_{u=1}^{k-1-q} b_{q+u} C(q+u, q) E[nu^u] - bbar_r C(r, q) E[nu^{r-q}]`,
/// starting from `b_{k-1}`.
pub fn compute_coefficients(r: usize, k: usize, moments: &Moments) -> Result<OrthoCoefficients> {
    check_preconditions(r, k, moments)?;
    let bar_b_r = 1.0 / moments.get(r);
    let mut b = vec![0.0; k - 1];
    for q in (1..k).rev() {
        let mut acc = -bar_b_r * binomial(r, q) as f64 * moments.get(r - q);
        for u in 1..=(k - 1 - q) {
            acc -= b[q + u - 1] * binomial(q + u, q) as f64 * moments.get(u);
        }
        b[q - 1] = acc;
    }
    Ok(OrthoCoefficients { r, k, bar_b_r, b })
}

/// Assembles the `k x k` system over `(bbar_r, b_1, ..., b_{k-1})` and
/// solves it densely.
///
/// Row 0 is `E[A | Z] = 1`: `bbar_r E[nu^r] + sum_q b_q (E[nu^q] - E[nu^q]) = 1`.
/// Row `q` (`1 <= q <= k-1`) is the vanishing of `E[d_g d_a^q psi | Z]`:
/// `bbar_r C(r, q) E[nu^{r-q}] + sum_{u=q}^{k-1} b_u C(u, q) E[nu^{u-q}] = 0`.
pub fn solve_coefficients_oracle(r: usize, k: usize, moments: &Moments) -> Result<OrthoCoefficients> {
    check_preconditions(r, k, moments)?;
    let (matrix, rhs) = coefficient_system(r, k, moments);
    let x = solve_dense(&matrix, &rhs)?;
    Ok(OrthoCoefficients { r, k, bar_b_r: x[0], b: x[1..].to_vec() })
}

/// Row-major matrix and right-hand side of the coefficient system.
pub fn coefficient_system(r: usize, k: usize, moments: &Moments) -> (Vec<f64>, Vec<f64>) {
    let mut matrix = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    matrix[0] = moments.get(r);
    for q in 1..k {
        matrix[q] = moments.get(q) - moments.get(q);
    }
    rhs[0] = 1.0;
    for q in 1..k {
        let row = q * k;
        matrix[row] = binomial(r, q) as f64 * moments.get(r - q);
        for u in q..k {
            matrix[row + u] = binomial(u, q) as f64 * moments.get(u - q);
        }
    }
    (matrix, rhs)
}

/// One unit's projection of `W = (Y, D, Z)` and the candidate parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreInput {
    /// Realization of `1{D = d^i}`, 0 or 1.
    pub treated_indicator: u8,
    /// `a_i(Z)`, strictly inside (0, 1).
    pub propensity: f64,
    /// `Y^i`.
    pub outcome: f64,
    /// Candidate outcome regression `g^i(Z)`.
    pub outcome_prediction: f64,
    /// Candidate causal parameter.
    pub theta: f64,
}

impl ScoreInput {
    pub fn validate(&self) -> Result<()> {
        if self.treated_indicator > 1 {
            return Err(Error::InvalidInput("treated indicator must be 0 or 1".into()));
        }
        if !(self.propensity > 0.0 && self.propensity < 1.0) {
            return Err(Error::InvalidInput(format!("propensity {} outside (0, 1)", self.propensity)));
        }
        Ok(())
    }

    fn residual(&self) -> f64 {
        f64::from(self.treated_indicator) - self.propensity
    }
}

/// A correction weight `A(t, a)` defining a score
/// `theta - g - (Y - g) * A(t, a)`.
pub trait Correction {
    fn weight(&self, treated: f64, propensity: f64) -> f64;
}

/// The higher-order correction built from coefficients and the moments they
/// were computed from.
#[derive(Debug, Clone, Copy)]
pub struct HigherOrderCorrection<'a> {
    pub coeffs: &'a OrthoCoefficients,
    pub moments: &'a Moments,
}

impl Correction for HigherOrderCorrection<'_> {
    fn weight(&self, treated: f64, propensity: f64) -> f64 {
        self.coeffs.correction_at(treated - propensity, self.moments)
    }
}

/// The first-order (DML) inverse-propensity weight `t / a`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DmlCorrection;

impl Correction for DmlCorrection {
    fn weight(&self, treated: f64, propensity: f64) -> f64 {
        treated / propensity
    }
}

/// `A(D, Z; a)` for a validated input.
pub fn eval_correction(input: &ScoreInput, coeffs: &OrthoCoefficients, moments: &Moments) -> Result<f64> {
    input.validate()?;
    Ok(coeffs.correction_at(input.residual(), moments))
}

/// `theta - g - (Y - g) * A`.
pub fn eval_score(input: &ScoreInput, coeffs: &OrthoCoefficients, moments: &Moments) -> Result<f64> {
    let a = eval_correction(input, coeffs, moments)?;
    Ok(score_from_weight(input, a))
}

/// Score for an arbitrary correction weight. No input validation.
pub fn eval_score_with<C: Correction + ?Sized>(input: &ScoreInput, correction: &C) -> f64 {
    let a = correction.weight(f64::from(input.treated_indicator), input.propensity);
    score_from_weight(input, a)
}

/// First-order DML score `theta - g - t (Y - g) / a`.
pub fn eval_dml_score(input: &ScoreInput) -> Result<f64> {
    input.validate()?;
    Ok(eval_score_with(input, &DmlCorrection))
}

#[inline]
fn score_from_weight(input: &ScoreInput, a: f64) -> f64 {
    input.theta - input.outcome_prediction - (input.outcome - input.outcome_prediction) * a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn second_order_coefficients_from_exact_moments() {
        let m = Moments::new(vec![0.0, 0.21]).unwrap();
        let c = compute_coefficients(2, 2, &m).unwrap();
        assert!(close(c.bar_b_r(), 1.0 / 0.21, 1e-15));
        assert_eq!(c.b(1), 0.0);
    }

    #[test]
    fn fourth_order_k2_closed_form() {
        // nu = 0.7 w.p. 0.3, -0.3 w.p. 0.7
        let m = Moments::bernoulli(0.3, 4).unwrap();
        assert!(close(m.get(3), 0.084, 1e-15));
        assert!(close(m.get(4), 0.0777, 1e-15));
        let c = compute_coefficients(4, 2, &m).unwrap();
        assert!(close(c.bar_b_r(), 12.870_012_870_012_87, 1e-10));
        assert!(close(c.b(1), -4.0 * 0.084 / 0.0777, 1e-12));
        assert!(close(c.b(1), -4.324_324_324_324_32, 1e-10));
    }

    #[test]
    fn r3_k3_extra_coefficient_vanishes() {
        let mut raw = Moments::bernoulli(0.3, 3).unwrap().as_slice().to_vec();
        raw[0] = 0.0;
        let m = Moments::new(raw).unwrap();
        let c3 = compute_coefficients(3, 3, &m).unwrap();
        let c2 = compute_coefficients(3, 2, &m).unwrap();
        assert_eq!(c3.b(2), 0.0);
        for t in [0.0, 1.0] {
            for a in [0.1, 0.3, 0.8] {
                assert_eq!(c3.correction_at(t - a, &m), c2.correction_at(t - a, &m));
            }
        }
    }

    #[test]
    fn invalid_orders_rejected() {
        let m = Moments::bernoulli(0.3, 6).unwrap();
        assert!(matches!(compute_coefficients(3, 1, &m), Err(Error::InvalidOrder(_))));
        assert!(matches!(compute_coefficients(2, 3, &m), Err(Error::InvalidOrder(_))));
        assert!(matches!(compute_coefficients(7, 2, &m), Err(Error::InvalidOrder(_))));
        let big = Moments::bernoulli(0.3, 17).unwrap();
        assert!(matches!(compute_coefficients(17, 2, &big), Err(Error::InvalidOrder(_))));
    }

    #[test]
    fn odd_moment_at_half_is_degenerate() {
        let m = Moments::bernoulli(0.5, 3).unwrap();
        assert!(matches!(compute_coefficients(3, 2, &m), Err(Error::DegenerateMoment { order: 3, .. })));
        assert!(matches!(solve_coefficients_oracle(3, 3, &m), Err(Error::DegenerateMoment { .. })));
    }

    #[test]
    fn oracle_matches_recursion_r2() {
        let m = Moments::new(vec![0.0, 0.21]).unwrap();
        let a = compute_coefficients(2, 2, &m).unwrap();
        let b = solve_coefficients_oracle(2, 2, &m).unwrap();
        for (x, y) in a.to_vec().iter().zip(b.to_vec()) {
            assert!(close(*x, y, 1e-12));
        }
    }

    #[test]
    fn oracle_matches_recursion_r5_k4() {
        let m = Moments::bernoulli(0.3, 5).unwrap();
        let a = compute_coefficients(5, 4, &m).unwrap();
        let b = solve_coefficients_oracle(5, 4, &m).unwrap();
        for (x, y) in a.to_vec().iter().zip(b.to_vec()) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0));
        }
    }

    #[test]
    fn oracle_rejects_tiny_rth_moment() {
        let mut raw = Moments::bernoulli(0.3, 4).unwrap().as_slice().to_vec();
        raw[3] = 1e-10;
        let m = Moments::new(raw).unwrap();
        assert!(matches!(
            solve_coefficients_oracle(4, 4, &m),
            Err(Error::DegenerateMoment { .. } | Error::SingularSystem)
        ));
    }

    #[test]
    fn correction_examples() {
        let m = Moments::bernoulli(0.3, 2).unwrap();
        let c = compute_coefficients(2, 2, &m).unwrap();
        let input = ScoreInput { treated_indicator: 1, propensity: 0.3, outcome: 0.0, outcome_prediction: 0.0, theta: 0.0 };
        let a1 = eval_correction(&input, &c, &m).unwrap();
        assert!(close(a1, 0.49 / 0.21, 1e-12));
        let a0 = eval_correction(&ScoreInput { treated_indicator: 0, ..input }, &c, &m).unwrap();
        assert!(close(0.3 * a1 + 0.7 * a0, 1.0, 1e-14));

        let zero = OrthoCoefficients::from_parts(2, 2, 0.0, vec![0.0]).unwrap();
        assert_eq!(eval_correction(&ScoreInput { treated_indicator: 0, propensity: 0.42, ..input }, &zero, &m).unwrap(), 0.0);
    }

    #[test]
    fn score_vanishes_when_theta_and_outcome_equal_prediction() {
        let m = Moments::bernoulli(0.4, 4).unwrap();
        let c = compute_coefficients(4, 3, &m).unwrap();
        let input = ScoreInput { treated_indicator: 1, propensity: 0.4, outcome: 2.5, outcome_prediction: 2.5, theta: 2.5 };
        assert_eq!(eval_score(&input, &c, &m).unwrap(), 0.0);
    }

    #[test]
    fn dml_weight_reproduces_ipw_summand() {
        let input = ScoreInput { treated_indicator: 1, propensity: 0.25, outcome: 3.0, outcome_prediction: 1.0, theta: 0.0 };
        // theta - [g + t (Y - g) / a]
        let summand = 1.0 + (3.0 - 1.0) / 0.25;
        assert_eq!(eval_dml_score(&input).unwrap(), -summand);
        let untreated = ScoreInput { treated_indicator: 0, ..input };
        assert_eq!(eval_dml_score(&untreated).unwrap(), -1.0);
    }

    #[test]
    fn input_validation() {
        let m = Moments::bernoulli(0.3, 2).unwrap();
        let c = compute_coefficients(2, 2, &m).unwrap();
        let bad = ScoreInput { treated_indicator: 2, propensity: 0.3, outcome: 0.0, outcome_prediction: 0.0, theta: 0.0 };
        assert!(eval_correction(&bad, &c, &m).is_err());
        let bad = ScoreInput { treated_indicator: 1, propensity: 1.0, ..bad };
        assert!(eval_score(&bad, &c, &m).is_err());
    }

    #[test]
    fn moments_validation() {
        assert!(Moments::new(vec![]).is_err());
        assert!(Moments::new(vec![0.0, -0.1]).is_err());
        assert!(Moments::new(vec![1.5]).is_err());
        assert!(Moments::new(vec![f64::NAN]).is_err());
        let m = Moments::from_residuals(&[0.7], 3).unwrap();
        assert!(close(m.get(3), 0.343, 1e-15));
    }
}
