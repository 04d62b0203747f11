//! Marginal nonparametric screening.
//!
//! Each feature is scored by how much of the response's variation a cubic
//! B-spline regression on that feature alone explains (null RSS minus
//! spline RSS). Features are ranked by descending score and the top
//! `target_count` are kept.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::{Error, Result};

/// Ridge added to the spline normal equations.
pub const NORMAL_EQUATION_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub degree: usize,
    pub knot_count: usize,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            knot_count: 4,
        }
    }
}

impl ScreeningConfig {
    pub fn basis_dim(&self) -> usize {
        self.knot_count + self.degree + 1
    }
}

/// Ranked screening outcome. `selected` holds column indices ordered by
/// descending score; `scores` may be empty when loaded from a file that
/// omitted them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
    pub selected: Vec<usize>,
    pub spline_degree: usize,
    pub knot_count: usize,
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clamped knot vector with `knot_count` interior knots at the empirical
/// quantiles `j / (knot_count + 1)` of `x`.
pub fn quantile_knots(x: &[f64], degree: usize, knot_count: usize) -> Result<Vec<f64>> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = match (sorted.first(), sorted.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
        _ => return Err(Error::ConstantInput),
    };
    let mut knots = Vec::with_capacity(knot_count + 2 * (degree + 1));
    knots.extend(core::iter::repeat_n(lo, degree + 1));
    for j in 1..=knot_count {
        knots.push(quantile_sorted(&sorted, j as f64 / (knot_count + 1) as f64));
    }
    knots.extend(core::iter::repeat_n(hi, degree + 1));
    Ok(knots)
}

/// Evaluates the `degree + 1` nonzero B-splines at `x` (de Boor's
/// triangular scheme). Returns the index of the first nonzero basis
/// function and writes the values into `out`.
fn nonzero_basis(knots: &[f64], degree: usize, x: f64, out: &mut [f64]) -> usize {
    let basis_dim = knots.len() - degree - 1;
    let hi = knots[basis_dim];
    let span = if x >= hi {
        // last nonempty span
        (degree..basis_dim)
            .rev()
            .find(|&s| knots[s] < knots[s + 1])
            .unwrap_or(degree)
    } else {
        (degree..basis_dim)
            .rev()
            .find(|&s| knots[s] <= x)
            .unwrap_or(degree)
    };
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
    span - degree
}

/// `n × (knot_count + degree + 1)` B-spline design on quantile knots.
pub fn bspline_design(x: &[f64], degree: usize, knot_count: usize) -> Result<Matrix> {
    let basis_dim = knot_count + degree + 1;
    if x.len() <= basis_dim {
        return Err(Error::TooFewSamples {
            needed: basis_dim + 1,
            found: x.len(),
        });
    }
    let knots = quantile_knots(x, degree, knot_count)?;
    let mut design = Matrix::zeros(x.len(), basis_dim);
    let mut vals = vec![0.0; degree + 1];
    for (i, &xi) in x.iter().enumerate() {
        let first = nonzero_basis(&knots, degree, xi, &mut vals);
        design.row_mut(i)[first..=first + degree].copy_from_slice(&vals);
    }
    Ok(design)
}

fn centered_ss(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum()
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Explained sum of squares of the spline regression of `y` on `x`.
/// Constant `x` scores 0.
pub fn marginal_score(y: &[f64], x: &[f64], cfg: &ScreeningConfig) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "marginal score inputs",
            expected: y.len(),
            found: x.len(),
        });
    }
    if x.is_empty() || is_constant(x) {
        return Ok(0.0);
    }
    let design = bspline_design(x, cfg.degree, cfg.knot_count)?;
    let q = design.ncols();
    let mut gram = Matrix::zeros(q, q);
    let mut rhs = vec![0.0; q];
    for (row, &yi) in design.rows_iter().zip(y) {
        for a in 0..q {
            if row[a] == 0.0 {
                continue;
            }
            rhs[a] += row[a] * yi;
            for b in 0..=a {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    let chol =
        Cholesky::factor(&gram, NORMAL_EQUATION_JITTER).ok_or(Error::CholeskyFailed { n: q })?;
    let coef = chol.solve(&rhs);
    let rss: f64 = design
        .rows_iter()
        .zip(y)
        .map(|(row, &yi)| {
            let r = yi - dot(row, &coef);
            r * r
        })
        .sum();
    Ok(centered_ss(y) - rss)
}

/// Scores every column of `d` sequentially.
pub fn column_scores(d: &Dataset, cfg: &ScreeningConfig) -> Result<Vec<f64>> {
    let x = d.features();
    (0..d.p())
        .map(|j| marginal_score(d.response(), &x.column(j), cfg))
        .collect()
}

/// Ranks precomputed scores and keeps the best `target_count` columns.
/// Ties go to the lower index; columns flagged in `constant` are never
/// selected.
pub fn rank_scores(
    scores: Vec<f64>,
    constant: &[bool],
    target_count: usize,
    cfg: &ScreeningConfig,
) -> Result<ScreeningResult> {
    let p = scores.len();
    if target_count < 1 || target_count > p {
        return Err(Error::InvalidArgument(alloc::format!(
            "target count {target_count} outside [1, {p}]"
        )));
    }
    let mut order: Vec<usize> = (0..p).filter(|&j| !constant[j]).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(target_count);
    Ok(ScreeningResult {
        scores,
        selected: order,
        spline_degree: cfg.degree,
        knot_count: cfg.knot_count,
    })
}

pub fn constant_columns(x: &Matrix) -> Vec<bool> {
    (0..x.ncols())
        .map(|j| {
            let first = x[(0, j)];
            (1..x.nrows()).all(|i| x[(i, j)] == first)
        })
        .collect()
}

/// Screens `d` down to its `target_count` most associated columns.
pub fn screen(d: &Dataset, target_count: usize, cfg: &ScreeningConfig) -> Result<ScreeningResult> {
    if target_count < 1 || target_count > d.p() {
        return Err(Error::InvalidArgument(alloc::format!(
            "target count {target_count} outside [1, {}]",
            d.p()
        )));
    }
    let scores = column_scores(d, cfg)?;
    rank_scores(scores, &constant_columns(d.features()), target_count, cfg)
}
