use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::sqrt;

/// Row-major covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Zero rows are allowed (an empty prediction batch); zero columns are not.
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::InvalidInput("feature matrix needs at least one column".into()));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::InvalidInput(format!(
                "{} values do not fill a {n_rows} x {n_cols} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { n_rows, n_cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Copy of the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self { n_rows: idx.len(), n_cols: self.n_cols, values }
    }

    pub(crate) fn check_cols(&self, expected: usize) -> Result<()> {
        if self.n_cols != expected {
            return Err(Error::ShapeMismatch { expected, found: self.n_cols });
        }
        Ok(())
    }
}

/// Per-column centering and scaling learned on a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Zero mean, unit (population) variance; constant columns keep scale 1.
    pub fn fit(x: &FeatureMatrix) -> Self {
        let n = x.n_rows().max(1) as f64;
        let p = x.n_cols();
        let mut mean = alloc::vec![0.0; p];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; p];
        for row in x.rows() {
            for j in 0..p {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = sqrt(v / n);
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        Self { mean, scale }
    }

    #[inline]
    pub fn apply(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.mean[j]) / self.scale[j];
        }
    }

    /// Standardized copy in column-major order (`n_cols` columns of length `n_rows`).
    pub(crate) fn columns(&self, x: &FeatureMatrix) -> Vec<Vec<f64>> {
        (0..x.n_cols())
            .map(|j| x.rows().map(|r| (r[j] - self.mean[j]) / self.scale[j]).collect())
            .collect()
    }
}

/// Row-major `n_rows x n_classes` matrix of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    n_rows: usize,
    n_classes: usize,
    values: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn new(n_rows: usize, n_classes: usize, values: Vec<f64>) -> Result<Self> {
        if n_classes == 0 || values.len() != n_rows * n_classes {
            return Err(Error::InvalidInput("probability matrix shape mismatch".into()));
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
        }
        Ok(Self { n_rows, n_classes, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_classes) {
            return Err(Error::InvalidInput("ragged probability rows".into()));
        }
        Self::new(rows.len(), n_classes, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    #[inline]
    pub fn get(&self, i: usize, class: usize) -> f64 {
        self.values[i * self.n_classes + class]
    }

    /// Column `class` as a vector.
    pub fn column(&self, class: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, class)).collect()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Clamps every entry into `[floor, 1 - floor]` and returns how many
    /// entries moved. Rows are not renormalized.
    pub fn apply_floor(&mut self, floor: f64) -> usize {
        if floor <= 0.0 {
            return 0;
        }
        let mut moved = 0;
        for v in &mut self.values {
            let c = v.clamp(floor, 1.0 - floor);
            if c != *v {
                moved += 1;
                *v = c;
            }
        }
        moved
    }
}
