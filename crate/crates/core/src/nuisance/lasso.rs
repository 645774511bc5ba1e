//! Lasso by cyclic coordinate descent on standardized features.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{FeatureMatrix, Standardization};
use crate::error::{Error, Result};
use crate::rng;

/// Fitted Lasso model. Coefficients live in standardized feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    pub(crate) standardization: Standardization,
    pub(crate) intercept: f64,
    pub(crate) coefficients: Vec<f64>,
    pub(crate) lambda: f64,
    pub(crate) iterations: usize,
}

impl LassoModel {
    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// Intercept in standardized space (equals the training mean of `y`).
    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Slopes on the standardized features.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (j, (&b, &x)) in self.coefficients.iter().zip(row).enumerate() {
            if b != 0.0 {
                acc += b * (x - self.standardization.mean[j]) / self.standardization.scale[j];
            }
        }
        acc
    }
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn check_inputs(x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::InvalidInput("X and y lengths differ".into()));
    }
    if x.n_rows() < 2 {
        return Err(Error::InvalidInput("lasso needs at least two rows".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso training data"));
    }
    Ok(())
}

/// Smallest penalty at which every slope is zero: `max_j |x_j^T (y - ybar)| / n`
/// on standardized features.
pub fn lambda_max(x: &FeatureMatrix, y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let st = Standardization::fit(x);
    let cols = st.columns(x);
    let n = y.len() as f64;
    let ybar = crate::numeric::mean(y);
    Ok(cols
        .iter()
        .map(|c| (c.iter().zip(y).map(|(a, b)| a * (b - ybar)).sum::<f64>() / n).abs())
        .fold(0.0, f64::max))
}

/// Minimizes `(1/2n) ||y - X b - b0||^2 + lambda ||b||_1` with an
/// unpenalized intercept.
pub fn fit_lasso_model(x: &FeatureMatrix, y: &[f64], lambda: f64, max_iter: usize, tol: f64) -> Result<LassoModel> {
    check_inputs(x, y)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput("lambda must be non-negative".into()));
    }
    let n = y.len();
    let nf = n as f64;
    let standardization = Standardization::fit(x);
    let cols = standardization.columns(x);
    let col_sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
    let intercept = crate::numeric::mean(y);
    let mut residual: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    let mut beta = vec![0.0; x.n_cols()];

    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..beta.len() {
            if col_sq[j] <= 1e-14 {
                continue;
            }
            let col = &cols[j];
            let rho = col.iter().zip(&residual).map(|(a, r)| a * r).sum::<f64>() / nf + beta[j] * col_sq[j];
            let updated = soft_threshold(rho, lambda) / col_sq[j];
            let delta = updated - beta[j];
            if delta != 0.0 {
                for (r, a) in residual.iter_mut().zip(col) {
                    *r -= delta * a;
                }
                beta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            break;
        }
    }
    Ok(LassoModel { standardization, intercept, coefficients: beta, lambda, iterations })
}

/// Picks `lambda` from `grid` by `folds`-fold cross-validated squared error
/// and refits on all rows.
pub fn fit_lasso_cv_model(
    x: &FeatureMatrix,
    y: &[f64],
    grid: &[f64],
    folds: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<LassoModel> {
    check_inputs(x, y)?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    if grid.len() == 1 {
        return fit_lasso_model(x, y, grid[0], max_iter, tol);
    }
    let n = y.len();
    let folds = folds.clamp(2, n);
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut order, &mut rng::stream(seed, 0));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            f[i] = pos % folds;
        }
        f
    };

    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        let mut sse = 0.0;
        let mut ok = true;
        for fold in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            if train.len() < 2 || test.is_empty() {
                ok = false;
                break;
            }
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = fit_lasso_model(&xt, &yt, lambda, max_iter, tol)?;
            for &i in &test {
                let e = y[i] - model.predict_row(x.row(i));
                sse += e * e;
            }
        }
        if ok && sse < best.0 {
            best = (sse, lambda);
        }
    }
    fit_lasso_model(x, y, best.1, max_iter, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn synthetic(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut r = rng::stream(seed, 0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x1 = rng::standard_normal(&mut r);
            let x2 = rng::standard_normal(&mut r);
            let x3: f64 = r.random_range(-1.0..1.0);
            xs.extend_from_slice(&[x1, x2, x3]);
            ys.push(2.0 * x1 + 0.5 * x3 + 0.01 * rng::standard_normal(&mut r));
        }
        (FeatureMatrix::new(n, 3, xs).unwrap(), ys)
    }

    #[test]
    fn ols_on_orthonormal_design() {
        // Columns are centered and mutually orthogonal.
        let x = FeatureMatrix::new(4, 2, vec![1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]).unwrap();
        let y = [3.0, 1.0, 0.5, -1.5];
        let m = fit_lasso_model(&x, &y, 0.0, 1000, 1e-14).unwrap();
        // OLS: b1 = (3 + 1 - 0.5 + 1.5)/4, b2 = (3 - 1 + 0.5 + 1.5)/4, intercept = mean
        let slope1 = 5.0 / 4.0;
        let slope2 = 4.0 / 4.0;
        let pred = m.predict_row(&[1.0, 1.0]);
        assert!((pred - (0.75 + slope1 + slope2)).abs() < 1e-8);
        let pred = m.predict_row(&[-1.0, 1.0]);
        assert!((pred - (0.75 - slope1 + slope2)).abs() < 1e-8);
    }

    #[test]
    fn penalty_above_lambda_max_zeroes_slopes() {
        let (x, y) = synthetic(200, 1);
        let lmax = lambda_max(&x, &y).unwrap();
        let m = fit_lasso_model(&x, &y, lmax, 100, 1e-10).unwrap();
        assert!(m.coefficients().iter().all(|&b| b == 0.0));
        let m = fit_lasso_model(&x, &y, lmax * 0.9, 100, 1e-10).unwrap();
        assert!(m.coefficients().iter().any(|&b| b != 0.0));
    }

    #[test]
    fn recovers_sparse_slope() {
        let (x, y) = synthetic(500, 2);
        let m = fit_lasso_model(&x, &y, 1e-4, 1000, 1e-10).unwrap();
        let raw_slope = m.coefficients()[0] / m.standardization().scale[0];
        assert!((1.9..=2.1).contains(&raw_slope), "{raw_slope}");
    }

    #[test]
    fn rejects_non_finite() {
        let x = FeatureMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(matches!(fit_lasso_model(&x, &[1.0, f64::NAN], 0.1, 10, 1e-6), Err(Error::NonFinite(_))));
    }
}
