mod common;

use common::*;
use skgp_core::gp::{log_marginal, log_marginal_constant, optimize_hyper_traced};
use skgp_core::rng::SeededRng;
use skgp_core::special::{student_t_cdf, student_t_logpdf};
use skgp_core::{FittedGP, GPHyper, HyperSearchConfig, Matrix};

const ORACLE_TOL: f64 = 1e-8;

struct Instance {
    z: Matrix,
    z_new: Matrix,
    y: Vec<f64>,
    hyper: GPHyper,
}

fn instance(seed: u64) -> Instance {
    let mut rng = SeededRng::new(seed);
    let n = 2 + rng.below(7) as usize;
    let n_new = 1 + rng.below(4) as usize;
    let d = 1 + rng.below(4) as usize;
    let hyper = GPHyper::new(rng.uniform(0.1, 3.0), (rng.uniform(-3.0, 3.0)).exp()).unwrap();
    Instance {
        z: random_matrix(&mut rng, n, d),
        z_new: random_matrix(&mut rng, n_new, d),
        y: random_vec(&mut rng, n),
        hyper,
    }
}

/// Predictive location and scale by explicit inversion of `ψ²C + I`.
fn dense_predictive(inst: &Instance) -> (Vec<f64>, Matrix, f64) {
    let (theta, psi2) = (inst.hyper.theta, inst.hyper.psi2);
    let n = inst.y.len();
    let c = exp_kernel(&inst.z, &inst.z, theta);
    let k = exp_kernel(&inst.z_new, &inst.z, theta);
    let kk = exp_kernel(&inst.z_new, &inst.z_new, theta);
    let (a_inv, log_det) = dense_inverse(&add_identity(&c, psi2));
    let a_inv_y = a_inv.matvec(&inst.y).unwrap();
    let b = 0.5 * inst.y.iter().zip(&a_inv_y).map(|(u, v)| u * v).sum::<f64>();
    let loc: Vec<f64> = k
        .matvec(&a_inv_y)
        .unwrap()
        .iter()
        .map(|v| psi2 * v)
        .collect();
    let q = k.matmul(&a_inv).unwrap().matmul(&k.transpose()).unwrap();
    let f = 2.0 * b / n as f64;
    let scale = Matrix::from_fn(kk.nrows(), kk.ncols(), |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        f * (id + psi2 * kk[(i, j)] - psi2 * psi2 * q[(i, j)])
    });
    let nf = n as f64;
    let lm =
        -0.5 * log_det - 0.5 * nf * (2.0 * b).ln() + 0.5 * nf * 2f64.ln() + libm::lgamma(0.5 * nf)
            - 0.5 * nf * (2.0 * std::f64::consts::PI).ln();
    (loc, scale, lm)
}

#[test]
fn predictive_and_log_marginal_match_dense_inverse() {
    for seed in 0..50 {
        let inst = instance(seed);
        let (loc, scale, lm) = dense_predictive(&inst);
        let gp = FittedGP::fit(inst.z.clone(), inst.y.clone(), inst.hyper).unwrap();
        let pt = gp.predict(&inst.z_new).unwrap();
        assert!(vec_rel_err(&pt.loc, &loc) < ORACLE_TOL, "seed {seed} loc");
        assert!(
            matrix_rel_err(&pt.scale, &scale) < ORACLE_TOL,
            "seed {seed} scale"
        );
        assert_eq!(pt.df, inst.y.len() as f64);
        let got = log_marginal(&inst.hyper, &inst.z, &inst.y).unwrap();
        assert!(rel_err(got, lm) < ORACLE_TOL, "seed {seed}: {got} vs {lm}");
    }
}

#[test]
fn log_marginal_constant_matches_formula() {
    for n in [1usize, 2, 7, 100] {
        let nf = n as f64;
        let direct = 0.5 * nf * 2f64.ln() + libm::lgamma(0.5 * nf)
            - 0.5 * nf * (2.0 * std::f64::consts::PI).ln();
        assert!((log_marginal_constant(n) - direct).abs() < 1e-10);
    }
}

#[test]
fn posterior_matches_inverse_correlation_form() {
    // (I + C⁻¹/ψ²)⁻¹ y and (2b/n)(I + C⁻¹/ψ²)⁻¹ against the fitted posterior
    for seed in 100..120 {
        let mut inst = instance(seed);
        inst.hyper.theta = 1.0;
        let n = inst.y.len();
        let c = exp_kernel(&inst.z, &inst.z, inst.hyper.theta);
        let (c_inv, _) = dense_inverse(&c);
        let m = Matrix::from_fn(n, n, |i, j| {
            c_inv[(i, j)] / inst.hyper.psi2 + if i == j { 1.0 } else { 0.0 }
        });
        let (m_inv, _) = dense_inverse(&m);
        let gp = FittedGP::fit(inst.z.clone(), inst.y.clone(), inst.hyper).unwrap();
        let post = gp.posterior();
        let mu = m_inv.matvec(&inst.y).unwrap();
        assert!(vec_rel_err(&post.f_t.loc, &mu) < 1e-7, "seed {seed}");
        let mut sigma = m_inv.clone();
        sigma.scale(2.0 * gp.b() / n as f64);
        assert!(
            matrix_rel_err(&post.f_t.scale, &sigma) < 1e-7,
            "seed {seed}"
        );
        assert_eq!(post.xi2_ig, (0.5 * n as f64, gp.b()));
    }
}

#[test]
fn huge_signal_ratio_interpolates_training_points() {
    let mut rng = SeededRng::new(9);
    let z = random_matrix(&mut rng, 6, 2);
    let y = random_vec(&mut rng, 6);
    let gp = FittedGP::fit(z.clone(), y.clone(), GPHyper::new(0.7, 1e9).unwrap()).unwrap();
    let pt = gp.predict(&z).unwrap();
    for (a, b) in pt.loc.iter().zip(&y) {
        assert!((a - b).abs() < 1e-6);
    }
}

/// `∫ N₃((y, f̃); 0, ξ²M) N(ỹ; f̃, ξ²) df̃ dξ² / ξ²` over `∫ N₂(y; 0, ξ²A) dξ² / ξ²`,
/// with the training `f` integrated out in closed form.
fn hierarchy_density(z: &Matrix, z_new: &Matrix, y: &[f64], h: GPHyper, y_new: f64) -> f64 {
    let all = Matrix::from_fn(
        3,
        z.ncols(),
        |i, j| if i < 2 { z[(i, j)] } else { z_new[(0, j)] },
    );
    let k = exp_kernel(&all, &all, h.theta);
    // covariance of (y₁, y₂, f̃) per unit ξ²
    let m = Matrix::from_fn(3, 3, |i, j| {
        h.psi2 * k[(i, j)] + if i == j && i < 2 { 1.0 } else { 0.0 }
    });
    let (m_inv, m_logdet) = dense_inverse(&m);
    let a = Matrix::from_fn(2, 2, |i, j| m[(i, j)]);
    let (a_inv, a_logdet) = dense_inverse(&a);
    let two_pi = 2.0 * std::f64::consts::PI;

    let log_n3 = |f: f64, xi2: f64| {
        let v = [y[0], y[1], f];
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += v[i] * m_inv[(i, j)] * v[j];
            }
        }
        -1.5 * (two_pi * xi2).ln() - 0.5 * m_logdet - 0.5 * q / xi2
    };
    let q2 = {
        let mut q = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                q += y[i] * a_inv[(i, j)] * y[j];
            }
        }
        q
    };
    let log_n2 = |xi2: f64| -(two_pi * xi2).ln() - 0.5 * a_logdet - 0.5 * q2 / xi2;

    // integrate in s = ln ξ² so that dξ²/ξ² = ds
    let (s_lo, s_hi, s_n) = (-25.0, 25.0, 4000);
    let num = simpson(
        |s| {
            let xi2 = s.exp();
            let sd = xi2.sqrt();
            let f_sd = sd * (1.0 + h.psi2).sqrt();
            let inner = simpson(
                |f| {
                    (log_n3(f, xi2) - 0.5 * (y_new - f).powi(2) / xi2 - 0.5 * (two_pi * xi2).ln())
                        .exp()
                },
                -12.0 * f_sd - 20.0,
                12.0 * f_sd + 20.0,
                800,
            );
            inner
        },
        s_lo,
        s_hi,
        s_n,
    );
    let den = simpson(|s| log_n2(s.exp()).exp(), s_lo, s_hi, s_n);
    num / den
}

#[test]
fn closed_form_predictive_matches_hierarchy_quadrature() {
    let z = Matrix::from_rows(&[vec![0.0, 0.3], vec![0.8, -0.2]]).unwrap();
    let z_new = Matrix::from_rows(&[vec![0.4, 0.5]]).unwrap();
    let y = [0.7, -0.4];
    let h = GPHyper::new(1.3, 2.0).unwrap();
    let gp = FittedGP::fit(z.clone(), y.to_vec(), h).unwrap();
    let pt = gp.predict(&z_new).unwrap();
    for v in [-2.0, -0.5, 0.1, 0.9, 2.5] {
        let closed = pt.logpdf_marginal(0, v).unwrap().exp();
        let quad = hierarchy_density(&z, &z_new, &y, h, v);
        assert!(rel_err(closed, quad) < 1e-3, "v={v}: {closed} vs {quad}");
    }
}

#[test]
fn extra_training_point_never_widens_normalized_scale() {
    for seed in 0..40 {
        let mut rng = SeededRng::new(1000 + seed);
        let n = 3 + rng.below(6) as usize;
        let z = random_matrix(&mut rng, n + 1, 2);
        let y = random_vec(&mut rng, n + 1);
        let z_new = random_matrix(&mut rng, 1, 2);
        let h = GPHyper::new(rng.uniform(0.2, 2.0), rng.uniform(0.1, 10.0)).unwrap();
        let normalized = |rows: usize| {
            let idx: Vec<usize> = (0..rows).collect();
            let gp = FittedGP::fit(z.select_rows(&idx), y[..rows].to_vec(), h).unwrap();
            let pt = gp.predict(&z_new).unwrap();
            pt.scale[(0, 0)] / (2.0 * gp.b() / rows as f64)
        };
        assert!(normalized(n + 1) <= normalized(n) + 1e-8, "seed {seed}");
    }
}

#[test]
fn predictive_scale_is_symmetric_psd() {
    for seed in 0..30 {
        let mut rng = SeededRng::new(500 + seed);
        let z = random_matrix(&mut rng, 30, 3);
        let y = random_vec(&mut rng, 30);
        let z_new = random_matrix(&mut rng, 12, 3);
        let h = GPHyper::new(rng.uniform(0.05, 5.0), rng.uniform(1e-3, 1e3)).unwrap();
        let pt = FittedGP::fit(z, y, h).unwrap().predict(&z_new).unwrap();
        assert!(pt.scale.max_abs_diff(&pt.scale.transpose()) <= 1e-10);
        let top = largest_eigenvalue(&pt.scale);
        let shifted = Matrix::from_fn(12, 12, |i, j| {
            pt.scale[(i, j)] + if i == j { 1e-8 * top } else { 0.0 }
        });
        assert!(
            skgp_core::linalg::Cholesky::factor(&shifted, 0.0).is_some(),
            "seed {seed}"
        );
    }
}

#[test]
fn pure_noise_prefers_small_signal_ratio() {
    let search = HyperSearchConfig::default();
    let mut small = 0;
    for seed in 0..100 {
        let mut rng = SeededRng::new(7_000 + seed);
        let z = random_matrix(&mut rng, 100, 1);
        let y = random_vec(&mut rng, 100);
        let out = optimize_hyper_traced(&z, &y, &search).unwrap();
        if out.hyper.psi2 < 1.0 {
            small += 1;
        }
    }
    assert!(small >= 90, "{small}/100");
}

#[test]
fn optimum_dominates_generating_hyper() {
    let mut rng = SeededRng::new(42);
    let n = 200;
    let z = random_matrix(&mut rng, n, 2);
    let truth = GPHyper::new(1.5, 4.0).unwrap();
    let a = add_identity(&exp_kernel(&z, &z, truth.theta), truth.psi2);
    let l = skgp_core::linalg::Cholesky::factor(&a, 0.0).unwrap();
    let e = random_vec(&mut rng, n);
    let f = l.factor_matrix();
    let y: Vec<f64> = (0..n)
        .map(|i| (0..=i).map(|j| f[(i, j)] * e[j]).sum::<f64>())
        .collect();
    let out = optimize_hyper_traced(&z, &y, &HyperSearchConfig::default()).unwrap();
    let at_truth = log_marginal(&truth, &z, &y).unwrap();
    assert!(
        out.log_marginal >= at_truth - 1e-9,
        "{} < {at_truth}",
        out.log_marginal
    );
    let recomputed = log_marginal(&out.hyper, &z, &y).unwrap();
    assert!((recomputed - out.log_marginal).abs() < 1e-8);
}

#[test]
fn doubling_distances_halves_theta() {
    let mut rng = SeededRng::new(5);
    let z = random_matrix(&mut rng, 25, 3);
    let y = random_vec(&mut rng, 25);
    let mut z2 = z.clone();
    z2.scale(2.0);
    let s = HyperSearchConfig::default();
    let a = optimize_hyper_traced(&z, &y, &s).unwrap();
    let b = optimize_hyper_traced(&z2, &y, &s).unwrap();
    assert!(rel_err(b.hyper.theta, 0.5 * a.hyper.theta) < 1e-12);
    assert!(rel_err(b.hyper.psi2, a.hyper.psi2) < 1e-12);
    assert!(rel_err(b.distance_scale, 2.0 * a.distance_scale) < 1e-12);
}

#[test]
fn t_cdf_agrees_with_density_quadrature() {
    for df in [1.0, 2.5, 7.0, 40.0, 1e6] {
        for x in [0.3, 1.0, 2.2, 4.0] {
            let quad = simpson(|t| student_t_logpdf(df, 0.0, 1.0, t).exp(), -x, x, 2000);
            let cdf = student_t_cdf(df, x) - student_t_cdf(df, -x);
            assert!((quad - cdf).abs() < 1e-10, "df={df} x={x}: {quad} vs {cdf}");
        }
    }
}

#[test]
fn t_approaches_normal_for_large_df() {
    for x in [0.5, 1.0, 1.96, 3.0] {
        let normal = simpson(
            |t| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -x,
            x,
            2000,
        );
        let t = student_t_cdf(1e8, x) - student_t_cdf(1e8, -x);
        assert!((normal - t).abs() < 1e-7, "x={x}");
    }
}
