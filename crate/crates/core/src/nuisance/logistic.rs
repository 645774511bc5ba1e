//! Multinomial logistic regression fitted by full-batch gradient descent with
//! a backtracking (Armijo) line search.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{FeatureMatrix, Standardization};
use crate::error::{Error, Result};
use crate::numeric::{ln, softmax_in_place};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub(crate) standardization: Standardization,
    /// `n_classes x (n_features + 1)`, intercept first.
    pub(crate) weights: Vec<f64>,
    pub(crate) n_classes: usize,
    pub(crate) loss_history: Vec<f64>,
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Row `c` holds `[intercept, slopes...]` of class `c` on standardized features.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Penalized loss after every accepted step, starting at the initial point.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Linear scores `W [1, z]` for one raw feature row.
    pub fn scores(&self, row: &[f64], out: &mut [f64]) {
        let p1 = row.len() + 1;
        let mut z = vec![0.0; row.len()];
        self.standardization.apply(row, &mut z);
        for c in 0..self.n_classes {
            let w = &self.weights[c * p1..(c + 1) * p1];
            out[c] = w[0] + w[1..].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        self.scores(row, out);
        softmax_in_place(out);
    }
}

struct Problem<'a> {
    z: &'a [f64],
    labels: &'a [usize],
    n: usize,
    p: usize,
    k: usize,
    l2: f64,
}

impl Problem<'_> {
    /// Penalized mean negative log-likelihood; fills `grad` when given.
    fn evaluate(&self, w: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let p1 = self.p + 1;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut logits = vec![0.0; self.k];
        let mut nll = 0.0;
        for i in 0..self.n {
            let row = &self.z[i * self.p..(i + 1) * self.p];
            for c in 0..self.k {
                let wc = &w[c * p1..(c + 1) * p1];
                logits[c] = wc[0] + wc[1..].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + ln(logits.iter().map(|l| crate::numeric::exp(l - max)).sum::<f64>());
            let y = self.labels[i];
            nll += lse - logits[y];
            if let Some(g) = grad.as_deref_mut() {
                for c in 0..self.k {
                    let prob = crate::numeric::exp(logits[c] - lse);
                    let resid = prob - if c == y { 1.0 } else { 0.0 };
                    let gc = &mut g[c * p1..(c + 1) * p1];
                    gc[0] += resid;
                    for (gj, xj) in gc[1..].iter_mut().zip(row) {
                        *gj += resid * xj;
                    }
                }
            }
        }
        let nf = self.n as f64;
        let mut penalty = 0.0;
        for c in 0..self.k {
            for j in 1..p1 {
                let v = w[c * p1 + j];
                penalty += v * v;
            }
        }
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= nf);
            for c in 0..self.k {
                for j in 1..p1 {
                    g[c * p1 + j] += self.l2 * w[c * p1 + j];
                }
            }
        }
        nll / nf + 0.5 * self.l2 * penalty
    }
}

/// Fits `P(D = c | x) = softmax(W [1, x])_c` minimizing the mean negative
/// log-likelihood plus `(l2 / 2) ||W_slopes||^2`. Intercepts are unpenalized.
/// Stops when the largest gradient entry drops below `tol` or after
/// `max_iter` accepted steps.
pub fn fit_logistic_model(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    l2: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticModel> {
    if x.n_rows() != labels.len() || labels.is_empty() {
        return Err(Error::InvalidInput("X and label lengths differ or are empty".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidInput("need at least two classes".into()));
    }
    if !(l2 >= 0.0) {
        return Err(Error::InvalidInput("l2 must be non-negative".into()));
    }
    let mut counts = vec![0usize; n_classes];
    for &d in labels {
        if d >= n_classes {
            return Err(Error::InvalidInput(alloc::format!("label {d} outside 0..{n_classes}")));
        }
        counts[d] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing));
    }

    let standardization = Standardization::fit(x);
    let p = x.n_cols();
    let mut z = vec![0.0; x.n_rows() * p];
    for (i, row) in x.rows().enumerate() {
        standardization.apply(row, &mut z[i * p..(i + 1) * p]);
    }
    let problem = Problem { z: &z, labels, n: labels.len(), p, k: n_classes, l2 };

    let dim = n_classes * (p + 1);
    let mut w = vec![0.0; dim];
    // Start intercepts at the log class frequencies.
    let nf = labels.len() as f64;
    for c in 0..n_classes {
        w[c * (p + 1)] = ln(counts[c] as f64 / nf);
    }
    let mut grad = vec![0.0; dim];
    let mut loss = problem.evaluate(&w, Some(&mut grad));
    let mut history = vec![loss];
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut candidate = vec![0.0; dim];
    let mut cand_grad = vec![0.0; dim];

    for _ in 0..max_iter {
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax < tol {
            break;
        }
        // Barzilai-Borwein trial step, then backtrack.
        if let Some((pw, pg)) = &prev {
            let mut sy = 0.0;
            let mut ss = 0.0;
            for j in 0..dim {
                let s = w[j] - pw[j];
                let y = grad[j] - pg[j];
                sy += s * y;
                ss += s * s;
            }
            if sy > 0.0 {
                step = (ss / sy).clamp(1e-6, 1e6);
            } else {
                step = (step * 2.0).min(1e6);
            }
        }
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        let accepted = loop {
            for j in 0..dim {
                candidate[j] = w[j] - step * grad[j];
            }
            let cand_loss = problem.evaluate(&candidate, None);
            if cand_loss <= loss - ARMIJO * step * gnorm2 {
                break Some(cand_loss);
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(new_loss) = accepted else { break };
        prev = Some((w.clone(), grad.clone()));
        w.copy_from_slice(&candidate);
        let recomputed = problem.evaluate(&w, Some(&mut cand_grad));
        debug_assert!((recomputed - new_loss).abs() <= 1e-9 * (1.0 + new_loss.abs()));
        grad.copy_from_slice(&cand_grad);
        loss = recomputed;
        history.push(loss);
    }

    Ok(LogisticModel { standardization, weights: w, n_classes, loss_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn binary_probability_is_monotone_in_linear_score() {
        let mut r = rng::stream(5, 0);
        let n = 400;
        let mut xs = Vec::new();
        let mut ds = Vec::new();
        for _ in 0..n {
            let x = rng::standard_normal(&mut r);
            let p = crate::numeric::sigmoid(1.5 * x - 0.2);
            xs.push(x);
            ds.push(usize::from(rng::uniform(&mut r) < p));
        }
        let x = FeatureMatrix::new(n, 1, xs).unwrap();
        let m = fit_logistic_model(&x, &ds, 2, 1e-4, 500, 1e-8).unwrap();
        let mut last = -1.0;
        let mut out = [0.0; 2];
        for v in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            m.predict_row(&[v], &mut out);
            assert!(out[1] > last);
            assert!((out[0] + out[1] - 1.0).abs() < 1e-12);
            last = out[1];
        }
    }

    #[test]
    fn separable_data_stays_finite_with_penalty() {
        let x = FeatureMatrix::new(6, 1, vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        let d = [0, 0, 0, 1, 1, 1];
        let m = fit_logistic_model(&x, &d, 2, 1.0, 2000, 1e-10).unwrap();
        assert!(m.weights().iter().all(|w| w.is_finite()));
        assert!(m.weights().iter().all(|w| w.abs() < 10.0));
    }

    #[test]
    fn loss_never_increases() {
        let mut r = rng::stream(9, 0);
        let n = 300;
        let xs: Vec<f64> = (0..n * 2).map(|_| rng::standard_normal(&mut r)).collect();
        let d: Vec<usize> = (0..n).map(|i| if xs[2 * i] > 0.3 { 2 } else if xs[2 * i + 1] > 0.0 { 1 } else { 0 }).collect();
        let x = FeatureMatrix::new(n, 2, xs).unwrap();
        let m = fit_logistic_model(&x, &d, 3, 1e-3, 300, 1e-9).unwrap();
        assert!(m.loss_history().windows(2).all(|w| w[1] <= w[0]));
        assert!(m.loss_history().len() > 2);
    }

    #[test]
    fn missing_class_is_an_error() {
        let x = FeatureMatrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(fit_logistic_model(&x, &[0, 0, 2], 3, 1e-4, 10, 1e-6).unwrap_err(), Error::MissingClass(1));
    }
}
