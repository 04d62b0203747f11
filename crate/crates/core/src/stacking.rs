//! Log-score stacking of sketched GP predictives.
//!
//! Each candidate model is one `(sketch, θ, ψ²)` triple. Its held-out
//! predictive density for observation `i` comes from refitting the
//! conjugate GP on all folds except the one containing `i` (hyperparameters
//! stay fixed) and reading off the univariate t marginal. Weights on the
//! simplex then maximize the mean log of the mixed held-out density, a
//! concave problem solved with the multiplicative EM-style fixed point.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan};
use crate::gp::{FittedGP, GPHyper, PredictiveT};
use crate::linalg::Matrix;
use crate::sketch::SketchMatrix;
use crate::special::student_t_cdf;
use crate::{Error, Result};

/// Log-density floor substituted for `-∞`.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;
pub const WEIGHT_TOL: f64 = 1e-10;
pub const WEIGHT_MAX_ITER: usize = 10_000;

/// Quantile bisection stops once the bracket is narrower than this.
pub const QUANTILE_TOL: f64 = 1e-8;
/// Half-width of the quantile bracket, in component scales.
pub const QUANTILE_BRACKET: f64 = 50.0;

/// One candidate model before fold refits: its sketch and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub sketch: SketchMatrix,
    pub hyper: GPHyper,
}

/// A GP trained on sketched features, together with the sketch that maps
/// raw features into its input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchedGP {
    pub sketch: SketchMatrix,
    pub gp: FittedGP,
}

impl SketchedGP {
    pub fn predict(&self, x_new: &Matrix) -> Result<PredictiveT> {
        self.gp.predict(&self.sketch.apply(x_new)?)
    }
}

/// `K × n` held-out log densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    log_values: Matrix,
    /// Positions `(k, i)` where `-∞` was replaced by the floor.
    floored: Vec<(usize, usize)>,
}

impl DensityTable {
    pub fn from_log_values(mut log_values: Matrix) -> Result<Self> {
        let mut floored = Vec::new();
        for k in 0..log_values.nrows() {
            for (i, v) in log_values.row_mut(k).iter_mut().enumerate() {
                if v.is_nan() || *v == f64::INFINITY {
                    return Err(Error::NonFinite { row: k, col: i });
                }
                if *v == f64::NEG_INFINITY {
                    *v = LOG_DENSITY_FLOOR;
                    floored.push((k, i));
                }
            }
        }
        Ok(Self {
            log_values,
            floored,
        })
    }

    pub fn models(&self) -> usize {
        self.log_values.nrows()
    }

    pub fn observations(&self) -> usize {
        self.log_values.ncols()
    }

    pub fn log_values(&self) -> &Matrix {
        &self.log_values
    }

    pub fn floored(&self) -> &[(usize, usize)] {
        &self.floored
    }

    pub fn any_floored(&self) -> bool {
        !self.floored.is_empty()
    }

    /// Mean held-out log score of model `k` alone.
    pub fn model_log_score(&self, k: usize) -> f64 {
        let row = self.log_values.row(k);
        row.iter().sum::<f64>() / row.len() as f64
    }
}

/// Held-out marginal log densities of one model: for each fold, refit on
/// the complement with `hyper` fixed, predict the fold jointly, and score
/// each held-out response under its univariate t marginal.
pub fn fold_log_densities(
    z: &Matrix,
    y: &[f64],
    hyper: GPHyper,
    plan: &FoldPlan,
) -> Result<Vec<f64>> {
    if plan.n() != y.len() || z.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "fold plan length",
            expected: y.len(),
            found: plan.n(),
        });
    }
    let mut out = vec![0.0; y.len()];
    for s in 0..plan.folds() {
        let train = plan.complement_indices(s);
        if train.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                found: train.len(),
            });
        }
        let held = plan.fold_indices(s);
        let gp = FittedGP::fit(
            z.select_rows(&train),
            train.iter().map(|&i| y[i]).collect(),
            hyper,
        )?;
        let pt = gp.predict(&z.select_rows(&held))?;
        for (coord, &i) in held.iter().enumerate() {
            out[i] = pt.logpdf_marginal(coord, y[i])?;
        }
    }
    Ok(out)
}

/// Builds the held-out density table for every model, sequentially.
pub fn fold_densities(models: &[ModelSpec], d: &Dataset, plan: &FoldPlan) -> Result<DensityTable> {
    let mut data = Vec::with_capacity(models.len() * d.n());
    for spec in models {
        let z = spec.sketch.apply(d.features())?;
        data.extend(fold_log_densities(&z, d.response(), spec.hyper, plan)?);
    }
    DensityTable::from_log_values(Matrix::from_vec(models.len(), d.n(), data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackWeights {
    w: Vec<f64>,
}

impl StackWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.is_empty() || w.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (sum - 1.0).abs() > 1e-10
        {
            return Err(Error::InvalidArgument(format!(
                "weights must lie on the simplex (sum {sum})"
            )));
        }
        Ok(Self { w })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            w: vec![1.0 / k as f64; k],
        }
    }

    pub fn vertex(k: usize, at: usize) -> Self {
        let mut w = vec![0.0; k];
        w[at] = 1.0;
        Self { w }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub weights: StackWeights,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each iteration, starting from the uniform weights.
    pub trace: Vec<f64>,
}

/// Exponentiated table with per-column max subtracted, plus those maxima.
fn shifted_densities(table: &DensityTable) -> Result<(Matrix, Vec<f64>)> {
    let (k, n) = (table.models(), table.observations());
    let lv = table.log_values();
    let mut col_max = vec![f64::NEG_INFINITY; n];
    for r in 0..k {
        for (m, &v) in col_max.iter_mut().zip(lv.row(r)) {
            *m = m.max(v);
        }
    }
    let mut floored_per_column = vec![0usize; n];
    for &(_, i) in &table.floored {
        floored_per_column[i] += 1;
    }
    if let Some(i) = floored_per_column.iter().position(|&c| c == k && k > 0) {
        return Err(Error::DegenerateColumn(i));
    }
    let p = Matrix::from_fn(k, n, |r, i| libm::exp(lv[(r, i)] - col_max[i]));
    Ok((p, col_max))
}

fn mixed(p: &Matrix, w: &[f64], i: usize) -> f64 {
    w.iter().enumerate().map(|(k, wk)| wk * p[(k, i)]).sum()
}

fn objective_shifted(p: &Matrix, offset: f64, w: &[f64]) -> f64 {
    let n = p.ncols();
    offset + (0..n).map(|i| libm::log(mixed(p, w, i))).sum::<f64>() / n as f64
}

/// Mean log score `(1/n) Σ_i log Σ_k w_k p_ki` of weights `w`.
pub fn stacking_objective(table: &DensityTable, w: &[f64]) -> Result<f64> {
    if w.len() != table.models() {
        return Err(Error::DimensionMismatch {
            what: "stacking weights",
            expected: table.models(),
            found: w.len(),
        });
    }
    let (p, col_max) = shifted_densities(table)?;
    let offset = col_max.iter().sum::<f64>() / col_max.len() as f64;
    Ok(objective_shifted(&p, offset, w))
}

pub fn optimize_weights(table: &DensityTable) -> Result<StackWeights> {
    optimize_weights_traced(table).map(|f| f.weights)
}

/// Multiplicative fixed point `w_k ← w_k · (1/n) Σ_i p_ki / Σ_j w_j p_ji`
/// from uniform weights. Each step is a minorize–maximize step, so the
/// objective never decreases. Iteration stops once both the objective gain
/// and the Frank–Wolfe duality gap `max_k g_k − 1` fall below
/// [`WEIGHT_TOL`], or after [`WEIGHT_MAX_ITER`] steps.
pub fn optimize_weights_traced(table: &DensityTable) -> Result<WeightFit> {
    let k = table.models();
    if k == 0 {
        return Err(Error::InvalidArgument("no models to stack".into()));
    }
    let n = table.observations();
    if n == 0 {
        return Err(Error::TooFewSamples {
            needed: 1,
            found: 0,
        });
    }
    let (p, col_max) = shifted_densities(table)?;
    let offset = col_max.iter().sum::<f64>() / n as f64;

    let mut w = vec![1.0 / k as f64; k];
    let mut obj = objective_shifted(&p, offset, &w);
    let mut trace = vec![obj];
    let mut grad = vec![0.0; k];
    let mut iterations = 0;
    if k > 1 {
        while iterations < WEIGHT_MAX_ITER {
            iterations += 1;
            grad.iter_mut().for_each(|g| *g = 0.0);
            for i in 0..n {
                let denom = mixed(&p, &w, i);
                for (r, g) in grad.iter_mut().enumerate() {
                    *g += p[(r, i)] / denom;
                }
            }
            grad.iter_mut().for_each(|g| *g /= n as f64);
            for (wk, g) in w.iter_mut().zip(&grad) {
                *wk *= g;
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|wk| *wk /= total);

            let next = objective_shifted(&p, offset, &w);
            let gain = next - obj;
            obj = next;
            trace.push(obj);

            if gain < WEIGHT_TOL {
                let gap = duality_gap(&p, &w);
                if gap < WEIGHT_TOL {
                    break;
                }
            }
        }
    }

    // A vertex can only win if the iteration budget ran out far from the
    // optimum; keep the simplex guarantee regardless.
    let (best_vertex, best_vertex_obj) = (0..k)
        .map(|r| {
            (
                r,
                objective_shifted(&p, offset, StackWeights::vertex(k, r).as_slice()),
            )
        })
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    if best_vertex_obj > obj {
        w = StackWeights::vertex(k, best_vertex).w;
        obj = best_vertex_obj;
        trace.push(obj);
    }

    Ok(WeightFit {
        weights: StackWeights { w },
        objective: obj,
        iterations,
        trace,
    })
}

fn duality_gap(p: &Matrix, w: &[f64]) -> f64 {
    let n = p.ncols();
    let mut best = f64::NEG_INFINITY;
    for r in 0..p.nrows() {
        let g = (0..n).map(|i| p[(r, i)] / mixed(p, w, i)).sum::<f64>() / n as f64;
        best = best.max(g);
    }
    best - 1.0
}

/// Weighted mixture of K multivariate t predictives over the same points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedPredictive {
    pub weights: StackWeights,
    pub components: Vec<PredictiveT>,
}

impl StackedPredictive {
    pub fn new(weights: StackWeights, components: Vec<PredictiveT>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                what: "mixture components",
                expected: weights.len(),
                found: components.len(),
            });
        }
        let dim = components.first().map_or(0, PredictiveT::dim);
        if let Some(bad) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                what: "component dimension",
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, PredictiveT::dim)
    }

    /// `Σ_k w_k μ_k`.
    pub fn mean(&self) -> Result<Vec<f64>> {
        if let Some(c) = self.components.iter().find(|c| c.df <= 1.0) {
            return Err(Error::DfTooSmall(c.df));
        }
        let mut out = vec![0.0; self.dim()];
        for (w, c) in self.weights.as_slice().iter().zip(&self.components) {
            for (o, m) in out.iter_mut().zip(&c.loc) {
                *o += w * m;
            }
        }
        Ok(out)
    }

    fn marginals(&self, coord: usize) -> Result<Vec<(f64, f64, f64, f64)>> {
        self.weights
            .as_slice()
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| {
                Ok((
                    w,
                    c.df,
                    c.loc.get(coord).copied().unwrap_or(0.0),
                    c.marginal_scale(coord)?,
                ))
            })
            .collect()
    }

    /// Mixture CDF of coordinate `coord` at `v`.
    pub fn cdf(&self, coord: usize, v: f64) -> Result<f64> {
        let parts = self.marginals(coord)?;
        Ok(mixture_cdf(&parts, v))
    }

    /// Solves `F(v) = q` by bisection on the mixture CDF.
    pub fn quantile(&self, coord: usize, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidProbability(q));
        }
        let parts = self.marginals(coord)?;
        let mut lo = parts
            .iter()
            .map(|&(_, _, m, s)| m - QUANTILE_BRACKET * s)
            .fold(f64::INFINITY, f64::min);
        let mut hi = parts
            .iter()
            .map(|&(_, _, m, s)| m + QUANTILE_BRACKET * s)
            .fold(f64::NEG_INFINITY, f64::max);
        while hi - lo > QUANTILE_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mixture_cdf(&parts, mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Central interval with coverage `level`, e.g. 0.95.
    pub fn interval(&self, coord: usize, level: f64) -> Result<(f64, f64)> {
        let tail = 0.5 * (1.0 - level);
        Ok((
            self.quantile(coord, tail)?,
            self.quantile(coord, 1.0 - tail)?,
        ))
    }
}

fn mixture_cdf(parts: &[(f64, f64, f64, f64)], v: f64) -> f64 {
    parts
        .iter()
        .filter(|p| p.0 > 0.0)
        .map(|&(w, df, m, s)| w * student_t_cdf(df, (v - m) / s))
        .sum()
}

/// Predicts `x_new` with every sketched model and pairs the results with
/// the stacking weights.
pub fn stack_predict(
    models: &[SketchedGP],
    weights: &StackWeights,
    x_new: &Matrix,
) -> Result<StackedPredictive> {
    let components = models
        .iter()
        .map(|m| m.predict(x_new))
        .collect::<Result<Vec<_>>>()?;
    StackedPredictive::new(weights.clone(), components)
}

pub fn mixture_mean(sp: &StackedPredictive) -> Result<Vec<f64>> {
    sp.mean()
}

pub fn mixture_quantile(sp: &StackedPredictive, coord: usize, q: f64) -> Result<f64> {
    sp.quantile(coord, q)
}
