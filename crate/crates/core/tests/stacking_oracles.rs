mod common;

use common::*;
use proptest::prelude::*;
use skgp_core::dataset::FoldPlan;
use skgp_core::gp::PredictiveT;
use skgp_core::rng::SeededRng;
use skgp_core::stacking::{
    fold_log_densities, optimize_weights, optimize_weights_traced, stacking_objective,
    DensityTable, StackWeights, StackedPredictive,
};
use skgp_core::{FittedGP, GPHyper, Matrix};

fn t_logpdf(df: f64, loc: f64, scale: f64, v: f64) -> f64 {
    let z = (v - loc) / scale;
    libm::lgamma(0.5 * (df + 1.0))
        - libm::lgamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI * scale * scale).ln()
        - 0.5 * (df + 1.0) * (1.0 + z * z / df).ln()
}

fn t_draw(rng: &mut SeededRng, df: usize) -> f64 {
    let chi2: f64 = (0..df).map(|_| rng.std_normal().powi(2)).sum();
    rng.std_normal() / (chi2 / df as f64).sqrt()
}

fn single(df: f64, loc: f64, scale: f64) -> PredictiveT {
    PredictiveT {
        df,
        loc: vec![loc],
        scale: Matrix::from_vec(1, 1, vec![scale * scale]).unwrap(),
    }
}

#[test]
fn leave_one_out_folds_match_direct_refits() {
    let mut rng = SeededRng::new(3);
    let n = 6;
    let z = random_matrix(&mut rng, n, 2);
    let y = random_vec(&mut rng, n);
    let h = GPHyper::new(0.9, 2.5).unwrap();
    let plan = FoldPlan::from_assignments((0..n).collect(), n).unwrap();
    let got = fold_log_densities(&z, &y, h, &plan).unwrap();
    for i in 0..n {
        let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let zt = z.select_rows(&rest);
        let yt: Vec<f64> = rest.iter().map(|&j| y[j]).collect();
        let (a_inv, _) = dense_inverse(&add_identity(&exp_kernel(&zt, &zt, h.theta), h.psi2));
        let k = exp_kernel(&z.select_rows(&[i]), &zt, h.theta);
        let a_inv_y = a_inv.matvec(&yt).unwrap();
        let a_inv_k = a_inv.matvec(k.row(0)).unwrap();
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let m = (n - 1) as f64;
        let b = 0.5 * dot(&yt, &a_inv_y);
        let loc = h.psi2 * dot(k.row(0), &a_inv_y);
        let s2 = 2.0 * b / m * (1.0 + h.psi2 - h.psi2 * h.psi2 * dot(k.row(0), &a_inv_k));
        let direct = t_logpdf(m, loc, s2.sqrt(), y[i]);
        assert!(
            (got[i] - direct).abs() < 1e-8,
            "i={i}: {} vs {direct}",
            got[i]
        );
    }
}

#[test]
fn zero_signal_row_is_prior_t() {
    let mut rng = SeededRng::new(4);
    let n = 12;
    let z = random_matrix(&mut rng, n, 3);
    let y = random_vec(&mut rng, n);
    let plan = FoldPlan::from_assignments((0..n).map(|i| i % 3).collect(), 3).unwrap();
    let got = fold_log_densities(&z, &y, GPHyper::new(1.0, 0.0).unwrap(), &plan).unwrap();
    for s in 0..3 {
        let train = plan.complement_indices(s);
        let m = train.len() as f64;
        let b = 0.5 * train.iter().map(|&j| y[j] * y[j]).sum::<f64>();
        for i in plan.fold_indices(s) {
            let direct = t_logpdf(m, 0.0, (2.0 * b / m).sqrt(), y[i]);
            assert!((got[i] - direct).abs() < 1e-10);
        }
    }
}

#[test]
fn dominant_model_matches_grid_search() {
    let mut rng = SeededRng::new(8);
    let n = 40;
    let row2: Vec<f64> = (0..n).map(|_| rng.uniform(-4.0, -1.0)).collect();
    let row1: Vec<f64> = row2.iter().map(|v| v + rng.uniform(0.1, 1.0)).collect();
    let table = DensityTable::from_log_values(Matrix::from_rows(&[row1, row2]).unwrap()).unwrap();
    let w = optimize_weights(&table).unwrap();
    let grid_best = (0..=10_000)
        .map(|i| i as f64 / 10_000.0)
        .map(|w1| (w1, stacking_objective(&table, &[w1, 1.0 - w1]).unwrap()))
        .fold(
            (0.0, f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    assert_eq!(grid_best.0, 1.0);
    assert!((w.as_slice()[0] - 1.0).abs() < 1e-6, "{:?}", w.as_slice());
}

#[test]
fn interior_optimum_matches_grid_search() {
    // each model wins on half the observations
    let n = 20;
    let row1: Vec<f64> = (0..n).map(|i| if i < 10 { -1.0 } else { -3.0 }).collect();
    let row2: Vec<f64> = (0..n).map(|i| if i < 10 { -2.5 } else { -0.5 }).collect();
    let table = DensityTable::from_log_values(Matrix::from_rows(&[row1, row2]).unwrap()).unwrap();
    let w = optimize_weights(&table).unwrap();
    let grid_best = (0..=100_000)
        .map(|i| i as f64 / 100_000.0)
        .map(|w1| (w1, stacking_objective(&table, &[w1, 1.0 - w1]).unwrap()))
        .fold(
            (0.0, f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    assert!((w.as_slice()[0] - grid_best.0).abs() < 1e-4);
}

#[test]
fn cauchy_upper_quartile_is_one() {
    let sp = StackedPredictive::new(
        StackWeights::new(vec![1.0]).unwrap(),
        vec![single(1.0, 0.0, 1.0)],
    )
    .unwrap();
    assert!((sp.quantile(0, 0.75).unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn two_component_quantile_matches_monte_carlo() {
    let sp = StackedPredictive::new(
        StackWeights::uniform(2),
        vec![single(10.0, -2.0, 1.0), single(10.0, 2.0, 1.0)],
    )
    .unwrap();
    assert!(sp.quantile(0, 0.5).unwrap().abs() < 1e-8);
    let mut rng = SeededRng::new(2024);
    let draws = 10_000_000;
    let mut v: Vec<f64> = (0..draws)
        .map(|_| {
            let loc = if rng.open01() < 0.5 { -2.0 } else { 2.0 };
            loc + t_draw(&mut rng, 10)
        })
        .collect();
    let at = (0.9 * draws as f64) as usize;
    let (_, mc, _) = v.select_nth_unstable_by(at, f64::total_cmp);
    let q = sp.quantile(0, 0.9).unwrap();
    assert!((q - *mc).abs() < 0.01, "{q} vs {mc}");
}

#[test]
fn interval_covers_draws_from_its_own_predictive() {
    let mut rng = SeededRng::new(77);
    let n = 25;
    let z = random_matrix(&mut rng, n, 2);
    let y = random_vec(&mut rng, n);
    let gp = FittedGP::fit(z, y, GPHyper::new(1.0, 3.0).unwrap()).unwrap();
    let pt = gp.predict(&random_matrix(&mut rng, 1, 2)).unwrap();
    let (loc, scale) = (pt.loc[0], pt.marginal_scale(0).unwrap());
    let sp = StackedPredictive::new(StackWeights::new(vec![1.0]).unwrap(), vec![pt]).unwrap();
    let (lo, hi) = sp.interval(0, 0.95).unwrap();
    let draws = 100_000;
    let hits = (0..draws)
        .filter(|_| {
            let v = loc + scale * t_draw(&mut rng, n);
            lo <= v && v <= hi
        })
        .count();
    let rate = hits as f64 / draws as f64;
    assert!((rate - 0.95).abs() < 0.01, "{rate}");
}

fn table_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..6, 1usize..30).prop_flat_map(|(k, n)| {
        proptest::collection::vec(-40.0f64..5.0, k * n)
            .prop_map(move |v| Matrix::from_vec(k, n, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_stay_on_simplex_and_beat_vertices(lv in table_strategy()) {
        let table = DensityTable::from_log_values(lv).unwrap();
        let fit = optimize_weights_traced(&table).unwrap();
        let w = fit.weights.as_slice();
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for k in 0..table.models() {
            let vertex = stacking_objective(&table, StackWeights::vertex(table.models(), k).as_slice()).unwrap();
            prop_assert!(fit.objective >= vertex - 1e-9);
        }
        for pair in fit.trace.windows(2) {
            prop_assert!(pair[1] - pair[0] >= -1e-12);
        }
    }

    #[test]
    fn mixture_quantiles_are_monotone(
        locs in proptest::collection::vec(-5.0f64..5.0, 1..4),
        q1 in 0.001f64..0.999,
        q2 in 0.001f64..0.999,
    ) {
        let k = locs.len();
        let comps = locs
            .iter()
            .enumerate()
            .map(|(i, &m)| single(2.0 + i as f64, m, 0.5 + i as f64))
            .collect();
        let sp = StackedPredictive::new(StackWeights::uniform(k), comps).unwrap();
        let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(sp.quantile(0, lo).unwrap() <= sp.quantile(0, hi).unwrap() + 1e-8);
    }
}
