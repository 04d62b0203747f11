//! Conjugate Gaussian process regression on sketched features.
//!
//! Model, for fixed length-scale `θ` and signal-to-noise ratio `ψ²`:
//!
//! ```text
//! y | f, ξ²  ~ N(f, ξ² I)
//! f | ξ²     ~ N(0, ξ² ψ² C),   C_ij = exp(-θ ‖z_i - z_j‖)
//! π(ξ²)      ∝ 1 / ξ²
//! ```
//!
//! Writing `A = ψ² C + I`, the posterior of `ξ²` is inverse gamma with shape
//! `n/2` and rate `b = yᵀ A⁻¹ y / 2`, and every posterior and predictive law
//! of `f` or new responses is a scaled multivariate t with `n` degrees of
//! freedom. All of them are evaluated through one Cholesky factor of `A`.
//! Forms that would need `C⁻¹ / ψ²` are rewritten as `ψ² C A⁻¹ = I − A⁻¹`
//! so that `ψ² = 0` is a regular point.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, squared_distance, Cholesky, Matrix};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::special::{ln_gamma, student_t_logpdf};
use crate::{Error, Result};

/// Diagonal jitter tried in order until the Cholesky factorization of
/// `ψ² C + I` succeeds.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Relative margin by which a search candidate must beat the incumbent.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPHyper {
    /// Exponential-kernel decay rate.
    pub theta: f64,
    /// Signal-to-noise variance ratio.
    pub psi2: f64,
}

impl GPHyper {
    pub fn new(theta: f64, psi2: f64) -> Result<Self> {
        let h = Self { theta, psi2 };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "length-scale {} must be positive",
                self.theta
            )));
        }
        if !(self.psi2 >= 0.0) || !self.psi2.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "signal-to-noise ratio {} must be non-negative",
                self.psi2
            )));
        }
        Ok(())
    }
}

pub fn kernel(z1: &[f64], z2: &[f64], theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "length-scale {theta} must be positive"
        )));
    }
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch {
            what: "kernel inputs",
            expected: z1.len(),
            found: z2.len(),
        });
    }
    Ok(libm::exp(-theta * libm::sqrt(squared_distance(z1, z2))))
}

/// Symmetric matrix of Euclidean distances between rows of `z`.
pub fn pairwise_distances(z: &Matrix) -> Matrix {
    let n = z.nrows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = libm::sqrt(squared_distance(z.row(i), z.row(j)));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

fn cross_distances(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        libm::sqrt(squared_distance(a.row(i), b.row(j)))
    })
}

fn exp_kernel_of(dist: &Matrix, theta: f64) -> Matrix {
    let mut c = dist.clone();
    c.as_mut_slice()
        .iter_mut()
        .for_each(|d| *d = libm::exp(-theta * *d));
    c
}

/// Kernel matrix `C` of the rows of `z`.
pub fn gram(z: &Matrix, theta: f64) -> Result<Matrix> {
    GPHyper::new(theta, 0.0)?;
    Ok(exp_kernel_of(&pairwise_distances(z), theta))
}

/// Kernel matrix between rows of `a` and rows of `b`.
pub fn cross_gram(a: &Matrix, b: &Matrix, theta: f64) -> Result<Matrix> {
    GPHyper::new(theta, 0.0)?;
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            what: "cross gram feature width",
            expected: b.ncols(),
            found: a.ncols(),
        });
    }
    Ok(exp_kernel_of(&cross_distances(a, b), theta))
}

/// `ψ² C + I` with only the lower triangle filled.
fn shifted_gram_lower(kernel: &Matrix, psi2: f64) -> Matrix {
    let n = kernel.nrows();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        let src = &kernel.row(i)[..=i];
        let dst = &mut a.row_mut(i)[..=i];
        for (d, s) in dst.iter_mut().zip(src) {
            *d = psi2 * s;
        }
        dst[i] += 1.0;
    }
    a
}

fn factor_with_ladder(a: &Matrix) -> Result<(Cholesky, f64)> {
    JITTER_LADDER
        .iter()
        .find_map(|&eps| Cholesky::factor(a, eps).map(|c| (c, eps)))
        .ok_or(Error::CholeskyFailed { n: a.nrows() })
}

/// `(n/2) log 2 + log Γ(n/2) − n log √(2π)`.
pub fn log_marginal_constant(n: usize) -> f64 {
    let half = 0.5 * n as f64;
    half * LN_2 + ln_gamma(half) - half * libm::log(2.0 * PI)
}

fn log_marginal_from_kernel(kernel: &Matrix, y: &[f64], psi2: f64) -> Result<f64> {
    let (chol, _) = factor_with_ladder(&shifted_gram_lower(kernel, psi2))?;
    let n = y.len();
    let quad = chol.quad_form(y);
    Ok(-0.5 * chol.log_det() - 0.5 * n as f64 * libm::log(quad) + log_marginal_constant(n))
}

fn check_training_shapes(z: &Matrix, y: &[f64]) -> Result<()> {
    if z.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "training rows",
            expected: y.len(),
            found: z.nrows(),
        });
    }
    Ok(())
}

/// Log of the `(θ, ψ²)` objective with `f` and `ξ²` integrated out:
/// `−½ log|ψ²C + I| − (n/2) log(yᵀ(ψ²C + I)⁻¹y)` plus the constant
/// [`log_marginal_constant`].
pub fn log_marginal(hyper: &GPHyper, z: &Matrix, y: &[f64]) -> Result<f64> {
    hyper.validate()?;
    check_training_shapes(z, y)?;
    let kernel = exp_kernel_of(&pairwise_distances(z), hyper.theta);
    log_marginal_from_kernel(&kernel, y, hyper.psi2)
}

/// Grid-then-simplex search over `(θ, ψ²)`.
///
/// The `θ` grid is log-spaced over `theta_span / d̄` where `d̄` is the
/// median pairwise distance of the sketched rows; the `ψ²` grid is
/// log-spaced over `psi2_range`. Nelder–Mead then refines the best grid
/// point in `(log θd̄, log ψ²)` without leaving the grid box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperSearchConfig {
    pub theta_points: usize,
    pub theta_span: (f64, f64),
    pub psi2_points: usize,
    pub psi2_range: (f64, f64),
    pub max_iter: usize,
    pub simplex_tol: f64,
}

impl Default for HyperSearchConfig {
    fn default() -> Self {
        Self {
            theta_points: 32,
            theta_span: (0.01, 100.0),
            psi2_points: 32,
            psi2_range: (1e-3, 1e3),
            max_iter: 200,
            simplex_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSearchOutcome {
    pub hyper: GPHyper,
    pub log_marginal: f64,
    pub grid_best: GPHyper,
    pub grid_log_marginal: f64,
    pub distance_scale: f64,
    pub simplex_iterations: usize,
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (libm::log(lo), libm::log(hi));
    if points == 1 {
        return vec![libm::exp(0.5 * (a + b))];
    }
    (0..points)
        .map(|i| libm::exp(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}

fn log_step(lo: f64, hi: f64, points: usize) -> f64 {
    if points > 1 {
        (libm::log(hi) - libm::log(lo)) / (points - 1) as f64
    } else {
        0.5
    }
}

/// Median of the strictly-upper-triangle entries of a distance matrix;
/// 1 when the rows are all identical.
pub fn median_distance(dist: &Matrix) -> f64 {
    let n = dist.nrows();
    let mut vals: Vec<f64> = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| dist[(i, j)])
        .collect();
    if vals.is_empty() {
        return 1.0;
    }
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    let med = if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        0.5 * (vals[mid - 1] + vals[mid])
    };
    if med > 0.0 && med.is_finite() {
        med
    } else {
        1.0
    }
}

pub fn optimize_hyper(z: &Matrix, y: &[f64], search: &HyperSearchConfig) -> Result<GPHyper> {
    optimize_hyper_traced(z, y, search).map(|o| o.hyper)
}

fn improves(v: f64, best: f64) -> bool {
    if best.is_finite() {
        v > best + TIE_TOL * best.abs().max(1.0)
    } else {
        v > best
    }
}

pub fn optimize_hyper_traced(
    z: &Matrix,
    y: &[f64],
    search: &HyperSearchConfig,
) -> Result<HyperSearchOutcome> {
    check_training_shapes(z, y)?;
    if y.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: y.len(),
        });
    }
    if search.theta_points < 1 || search.psi2_points < 1 {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let dist = pairwise_distances(z);
    let scale = median_distance(&dist);

    let theta_rel = log_grid(
        search.theta_span.0,
        search.theta_span.1,
        search.theta_points,
    );
    let psi2_grid = log_grid(search.psi2_range.0, search.psi2_range.1, search.psi2_points);

    // near-ties go to the smaller ψ², then the smaller θ
    let kernels: Vec<Matrix> = theta_rel
        .iter()
        .map(|&t| exp_kernel_of(&dist, t / scale))
        .collect();
    let mut best = (f64::NEG_INFINITY, theta_rel[0], psi2_grid[0]);
    for &s in &psi2_grid {
        for (kernel, &t) in kernels.iter().zip(&theta_rel) {
            if let Ok(v) = log_marginal_from_kernel(kernel, y, s) {
                if improves(v, best.0) {
                    best = (v, t, s);
                }
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::CholeskyFailed { n: y.len() });
    }
    let (grid_value, grid_t, grid_s) = best;

    let bounds = [
        (
            libm::log(search.theta_span.0),
            libm::log(search.theta_span.1),
        ),
        (
            libm::log(search.psi2_range.0),
            libm::log(search.psi2_range.1),
        ),
    ];
    // the simplex is confined to the grid box
    let objective = |u: &[f64]| -> f64 {
        if u.iter().zip(&bounds).any(|(v, b)| !(b.0..=b.1).contains(v)) {
            return f64::INFINITY;
        }
        let theta = libm::exp(u[0]) / scale;
        let psi2 = libm::exp(u[1]);
        if !(theta > 0.0 && theta.is_finite() && psi2.is_finite()) {
            return f64::INFINITY;
        }
        let kernel = exp_kernel_of(&dist, theta);
        match log_marginal_from_kernel(&kernel, y, psi2) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        }
    };
    let start = [libm::log(grid_t), libm::log(grid_s)];
    let steps = [
        log_step(
            search.theta_span.0,
            search.theta_span.1,
            search.theta_points,
        ),
        log_step(search.psi2_range.0, search.psi2_range.1, search.psi2_points),
    ];
    let nm = nelder_mead(
        objective,
        &start,
        &steps,
        &NelderMeadConfig {
            max_iter: search.max_iter,
            tol: search.simplex_tol,
        },
    );

    let grid_best = GPHyper {
        theta: grid_t / scale,
        psi2: grid_s,
    };
    let (hyper, value) = if improves(-nm.value, grid_value) {
        (
            GPHyper {
                theta: libm::exp(nm.x[0]) / scale,
                psi2: libm::exp(nm.x[1]),
            },
            -nm.value,
        )
    } else {
        (grid_best, grid_value)
    };
    Ok(HyperSearchOutcome {
        hyper,
        log_marginal: value,
        grid_best,
        grid_log_marginal: grid_value,
        distance_scale: scale,
        simplex_iterations: nm.iterations,
    })
}

/// Scaled multivariate t law: `df` degrees of freedom, location `loc`,
/// scale matrix `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveT {
    pub df: f64,
    pub loc: Vec<f64>,
    pub scale: Matrix,
}

impl PredictiveT {
    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    /// Scale (not squared) of the univariate marginal at `coord`.
    pub fn marginal_scale(&self, coord: usize) -> Result<f64> {
        if coord >= self.dim() {
            return Err(Error::IndexOutOfBounds {
                index: coord,
                len: self.dim(),
            });
        }
        let s2 = self.scale[(coord, coord)];
        if !(s2 > 0.0) {
            return Err(Error::NonPositiveScale { coord });
        }
        Ok(libm::sqrt(s2))
    }

    pub fn logpdf_marginal(&self, coord: usize, value: f64) -> Result<f64> {
        let s = self.marginal_scale(coord)?;
        Ok(student_t_logpdf(self.df, self.loc[coord], s, value))
    }
}

/// Log density of coordinate `coord` of `pt` at `value`.
pub fn t_logpdf_marginal(pt: &PredictiveT, coord: usize, value: f64) -> Result<f64> {
    pt.logpdf_marginal(coord, value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Inverse-gamma `(shape, rate)` of `ξ²`.
    pub xi2_ig: (f64, f64),
    /// Law of `f` at the training inputs.
    pub f_t: PredictiveT,
}

/// Trained state of one conjugate GP: the factor of `ψ²C + I + εI` and
/// everything predictions need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGP {
    z: Matrix,
    y: Vec<f64>,
    hyper: GPHyper,
    chol: Cholesky,
    jitter: f64,
    /// `A⁻¹ y`
    alpha: Vec<f64>,
    b: f64,
}

impl FittedGP {
    pub fn fit(z: Matrix, y: Vec<f64>, hyper: GPHyper) -> Result<Self> {
        hyper.validate()?;
        check_training_shapes(&z, &y)?;
        if y.is_empty() {
            return Err(Error::TooFewSamples {
                needed: 1,
                found: 0,
            });
        }
        let kernel = exp_kernel_of(&pairwise_distances(&z), hyper.theta);
        let (chol, jitter) = factor_with_ladder(&shifted_gram_lower(&kernel, hyper.psi2))?;
        let alpha = chol.solve(&y);
        let b = 0.5 * chol.quad_form(&y);
        Ok(Self {
            z,
            y,
            hyper,
            chol,
            jitter,
            alpha,
            b,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn hyper(&self) -> GPHyper {
        self.hyper
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn training_features(&self) -> &Matrix {
        &self.z
    }

    pub fn training_response(&self) -> &[f64] {
        &self.y
    }

    /// `2b / n`, the common factor of every scale matrix.
    fn scale_factor(&self) -> f64 {
        2.0 * self.b / self.n() as f64
    }

    pub fn posterior(&self) -> PosteriorSummary {
        let n = self.n();
        let loc: Vec<f64> = self.y.iter().zip(&self.alpha).map(|(y, a)| y - a).collect();
        // A⁻¹ = L⁻ᵀ L⁻¹, built from the columns of L⁻¹
        let mut inv_l = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.chol.solve_lower_in_place(&mut e);
            for i in 0..n {
                inv_l[(i, j)] = e[i];
            }
        }
        let c = self.scale_factor();
        let inv_l_t = inv_l.transpose();
        let mut scale = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let a_inv = dot(inv_l_t.row(i), inv_l_t.row(j));
                let v = c * (if i == j { 1.0 } else { 0.0 } - a_inv);
                scale[(i, j)] = v;
                scale[(j, i)] = v;
            }
        }
        PosteriorSummary {
            xi2_ig: (0.5 * n as f64, self.b),
            f_t: PredictiveT {
                df: n as f64,
                loc,
                scale,
            },
        }
    }

    /// Joint posterior predictive of new responses at sketched inputs
    /// `z_new`.
    pub fn predict(&self, z_new: &Matrix) -> Result<PredictiveT> {
        if z_new.ncols() != self.z.ncols() {
            return Err(Error::DimensionMismatch {
                what: "prediction feature width",
                expected: self.z.ncols(),
                found: z_new.ncols(),
            });
        }
        let psi2 = self.hyper.psi2;
        let theta = self.hyper.theta;
        let cross = exp_kernel_of(&cross_distances(z_new, &self.z), theta);
        let loc: Vec<f64> = cross
            .rows_iter()
            .map(|k| psi2 * dot(k, &self.alpha))
            .collect();

        // v_j = L⁻¹ (ψ² k_j), so v_jᵀ v_l = ψ⁴ k_jᵀ A⁻¹ k_l
        let m = z_new.nrows();
        let mut v = Matrix::zeros(m, self.n());
        for j in 0..m {
            let row = v.row_mut(j);
            for (dst, &k) in row.iter_mut().zip(cross.row(j)) {
                *dst = psi2 * k;
            }
            self.chol.solve_lower_in_place(row);
        }
        let c = self.scale_factor();
        let mut scale = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let k_new =
                    libm::exp(-theta * libm::sqrt(squared_distance(z_new.row(i), z_new.row(j))));
                let diag = if i == j { 1.0 } else { 0.0 };
                let s = c * (diag + psi2 * k_new - dot(v.row(i), v.row(j)));
                scale[(i, j)] = s;
                scale[(j, i)] = s;
            }
        }
        Ok(PredictiveT {
            df: self.n() as f64,
            loc,
            scale,
        })
    }
}

pub fn fit(z: Matrix, y: Vec<f64>, hyper: GPHyper) -> Result<FittedGP> {
    FittedGP::fit(z, y, hyper)
}

pub fn posterior(f: &FittedGP) -> PosteriorSummary {
    f.posterior()
}

pub fn predict(f: &FittedGP, z_new: &Matrix) -> Result<PredictiveT> {
    f.predict(z_new)
}
