//! Regression data, standardization and fold partitioning.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::{Error, Result};

/// An `n × p` feature matrix with its response vector. Immutable once built;
/// every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    response: Vec<f64>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Matrix, response: Vec<f64>) -> Result<Self> {
        if features.nrows() != response.len() {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: features.nrows(),
                found: response.len(),
            });
        }
        for (i, row) in features.rows_iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i,
                col: features.ncols(),
            });
        }
        Ok(Self {
            features,
            response,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "feature names",
                expected: self.p(),
                found: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            response: idx.iter().map(|&i| self.response[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn into_parts(self) -> (Matrix, Vec<f64>, Option<Vec<String>>) {
        (self.features, self.response, self.feature_names)
    }
}

/// Column and response location/scale used to standardize a dataset.
///
/// Constant columns keep `sd = 1` and are flagged in `constant`; they are
/// centered but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_means: Vec<f64>,
    pub feature_sds: Vec<f64>,
    pub constant: Vec<bool>,
    pub response_mean: f64,
    pub response_sd: f64,
    pub response_constant: bool,
}

fn location_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, bool) {
    let mut it = values.clone();
    let first = it.next().unwrap_or(0.0);
    if it.all(|v| v == first) {
        return (first, 1.0, true);
    }
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let sd = libm::sqrt(ss / (n as f64 - 1.0));
    (mean, sd, false)
}

impl StandardizationParams {
    /// Sample statistics (n − 1 denominator) of one dataset.
    pub fn fit(d: &Dataset) -> Result<Self> {
        Self::fit_pooled(&[d])
    }

    /// Statistics of several datasets stacked row-wise, e.g. train and test
    /// together. The default everywhere else is training-set statistics.
    pub fn fit_pooled(parts: &[&Dataset]) -> Result<Self> {
        let n: usize = parts.iter().map(|d| d.n()).sum();
        if n < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                found: n,
            });
        }
        let p = parts[0].p();
        if let Some(bad) = parts.iter().find(|d| d.p() != p) {
            return Err(Error::DimensionMismatch {
                what: "pooled feature count",
                expected: p,
                found: bad.p(),
            });
        }
        let mut feature_means = Vec::with_capacity(p);
        let mut feature_sds = Vec::with_capacity(p);
        let mut constant = Vec::with_capacity(p);
        for j in 0..p {
            let col = parts
                .iter()
                .flat_map(move |d| (0..d.n()).map(move |i| d.features[(i, j)]));
            let (m, s, c) = location_scale(col);
            feature_means.push(m);
            feature_sds.push(s);
            constant.push(c);
        }
        let (response_mean, response_sd, response_constant) =
            location_scale(parts.iter().flat_map(|d| d.response.iter().copied()));
        Ok(Self {
            feature_means,
            feature_sds,
            constant,
            response_mean,
            response_sd,
            response_constant,
        })
    }

    fn check_width(&self, p: usize) -> Result<()> {
        if p != self.feature_means.len() {
            return Err(Error::DimensionMismatch {
                what: "standardization width",
                expected: self.feature_means.len(),
                found: p,
            });
        }
        Ok(())
    }

    pub fn apply_features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x.ncols())?;
        Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.feature_means[j]) / self.feature_sds[j]
        }))
    }

    pub fn restore_features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x.ncols())?;
        Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            x[(i, j)] * self.feature_sds[j] + self.feature_means[j]
        }))
    }

    pub fn apply_response(&self, y: f64) -> f64 {
        (y - self.response_mean) / self.response_sd
    }

    pub fn restore_response(&self, z: f64) -> f64 {
        z * self.response_sd + self.response_mean
    }

    /// Maps a scale (e.g. an interval length) back to response units.
    pub fn restore_response_scale(&self, s: f64) -> f64 {
        s * self.response_sd
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            features: self.apply_features(&d.features)?,
            response: d.response.iter().map(|&y| self.apply_response(y)).collect(),
            feature_names: d.feature_names.clone(),
        })
    }

    pub fn restore(&self, d: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            features: self.restore_features(&d.features)?,
            response: d
                .response
                .iter()
                .map(|&z| self.restore_response(z))
                .collect(),
            feature_names: d.feature_names.clone(),
        })
    }
}

/// Standardizes features and response with the dataset's own statistics.
pub fn standardize(d: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    let params = StandardizationParams::fit(d)?;
    let out = params.apply(d)?;
    Ok((out, params))
}

pub fn destandardize(d: &Dataset, params: &StandardizationParams) -> Result<Dataset> {
    params.restore(d)
}

/// Assignment of each of `n` rows to one of `folds` disjoint folds.
/// Fold ids are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    assignments: Vec<usize>,
    folds: usize,
}

impl FoldPlan {
    pub fn from_assignments(assignments: Vec<usize>, folds: usize) -> Result<Self> {
        if folds < 1 {
            return Err(Error::InvalidArgument(format!("fold count {folds} < 1")));
        }
        let mut sizes = vec![0usize; folds];
        for &a in &assignments {
            if a >= folds {
                return Err(Error::IndexOutOfBounds {
                    index: a,
                    len: folds,
                });
            }
            sizes[a] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument("empty fold".into()));
        }
        Ok(Self { assignments, folds })
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold_indices(&self, s: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.assignments[i] == s)
            .collect()
    }

    /// Indices of every row outside fold `s`.
    pub fn complement_indices(&self, s: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.assignments[i] != s)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.folds];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Random balanced partition of `0..n` into `folds` folds: round-robin
/// labels shuffled with a seeded Fisher–Yates pass.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {folds} must lie in [2, {n}]"
        )));
    }
    let mut assignments: Vec<usize> = (0..n).map(|i| i % folds).collect();
    SeededRng::new(seed).shuffle(&mut assignments);
    Ok(FoldPlan { assignments, folds })
}
