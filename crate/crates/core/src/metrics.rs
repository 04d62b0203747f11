//! Predictive accuracy metrics and replicate summaries.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_lengths(a: usize, b: usize, what: &'static str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            what,
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Mean squared prediction error.
pub fn mspe(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len(), "mspe inputs")?;
    if pred.is_empty() {
        return Err(Error::TooFewSamples {
            needed: 1,
            found: 0,
        });
    }
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(ss / pred.len() as f64)
}

/// Fraction of `truth` inside the closed intervals `[lower, upper]`.
pub fn coverage(lower: &[f64], upper: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(lower.len(), upper.len(), "interval bounds")?;
    check_lengths(lower.len(), truth.len(), "coverage truth")?;
    if truth.is_empty() {
        return Err(Error::TooFewSamples {
            needed: 1,
            found: 0,
        });
    }
    if let Some(index) = lower.iter().zip(upper).position(|(l, u)| l > u) {
        return Err(Error::CrossedBounds { index });
    }
    let hits = lower
        .iter()
        .zip(upper)
        .zip(truth)
        .filter(|((l, u), t)| *l <= *t && *t <= *u)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Median width of the intervals.
pub fn median_length(lower: &[f64], upper: &[f64]) -> Result<f64> {
    check_lengths(lower.len(), upper.len(), "interval bounds")?;
    let widths: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    Ok(median(&widths))
}

/// Mean, sample standard deviation and standard error `sd / √count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            libm::sqrt(ss / (count as f64 - 1.0))
        } else {
            0.0
        };
        let se = if count > 0 {
            sd / libm::sqrt(count as f64)
        } else {
            f64::NAN
        };
        Self {
            count,
            mean,
            sd,
            se,
        }
    }
}
