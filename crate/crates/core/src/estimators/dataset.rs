use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nuisance::FeatureMatrix;
use crate::numeric::sum;

/// Observed data `W = (Y, D, Z)` with optional per-unit potential-outcome
/// means for semi-synthetic benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<usize>,
    z: FeatureMatrix,
    n_treatments: usize,
    /// `truth[i][m] = g^i(Z_m)`.
    truth: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, d: Vec<usize>, z: FeatureMatrix, n_treatments: usize) -> Result<Self> {
        Self::with_truth(y, d, z, n_treatments, None)
    }

    pub fn with_truth(
        y: Vec<f64>,
        d: Vec<usize>,
        z: FeatureMatrix,
        n_treatments: usize,
        truth: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = y.len();
        if d.len() != n || z.n_rows() != n {
            return Err(Error::InvalidInput(format!(
                "column lengths differ: y {n}, d {}, Z {}",
                d.len(),
                z.n_rows()
            )));
        }
        if n_treatments < 2 {
            return Err(Error::InvalidInput("need at least two treatments".into()));
        }
        if let Some((m, &label)) = d.iter().enumerate().find(|(_, &l)| l >= n_treatments) {
            return Err(Error::InvalidInput(format!("unit {m} has label {label} outside 0..{n_treatments}")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcomes"));
        }
        if let Some(t) = &truth {
            if t.len() != n_treatments || t.iter().any(|c| c.len() != n) {
                return Err(Error::InvalidInput("truth needs one column of length n per treatment".into()));
            }
            if t.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("potential-outcome means"));
            }
        }
        Ok(Self { y, d, z, n_treatments, truth })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[usize] {
        &self.d
    }

    pub fn z(&self) -> &FeatureMatrix {
        &self.z
    }

    pub fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    pub fn n_features(&self) -> usize {
        self.z.n_cols()
    }

    pub fn truth(&self) -> Option<&[Vec<f64>]> {
        self.truth.as_deref()
    }

    /// `theta^i` as the mean of the true potential-outcome means over `rows`.
    pub fn true_theta(&self, rows: &[usize]) -> Option<Vec<f64>> {
        let truth = self.truth.as_ref()?;
        if rows.is_empty() {
            return None;
        }
        Some(
            truth
                .iter()
                .map(|col| sum(rows.iter().map(|&m| col[m])) / rows.len() as f64)
                .collect(),
        )
    }

    /// Pairwise effects `theta^i - theta^k` over `rows`.
    pub fn true_ate(&self, rows: &[usize]) -> Option<Vec<Vec<f64>>> {
        self.true_theta(rows).map(|t| super::pairwise(&t))
    }

    /// The same data restricted to `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            y: rows.iter().map(|&m| self.y[m]).collect(),
            d: rows.iter().map(|&m| self.d[m]).collect(),
            z: self.z.select_rows(rows),
            n_treatments: self.n_treatments,
            truth: self
                .truth
                .as_ref()
                .map(|t| t.iter().map(|c| rows.iter().map(|&m| c[m]).collect()).collect()),
        }
    }
}
