#![allow(dead_code)]

use skgp_core::rng::SeededRng;
use skgp_core::Matrix;

/// Gauss–Jordan inverse with partial pivoting, plus `log|det|`.
pub fn dense_inverse(a: &Matrix) -> (Matrix, f64) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Matrix::identity(n);
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        if pivot != col {
            for j in 0..n {
                let (a1, a2) = (m[(col, j)], m[(pivot, j)]);
                m.row_mut(col)[j] = a2;
                m.row_mut(pivot)[j] = a1;
                let (b1, b2) = (inv[(col, j)], inv[(pivot, j)]);
                inv.row_mut(col)[j] = b2;
                inv.row_mut(pivot)[j] = b1;
            }
        }
        let p = m[(col, col)];
        log_det += p.abs().ln();
        for j in 0..n {
            m.row_mut(col)[j] /= p;
            inv.row_mut(col)[j] /= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = m[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                let (mv, iv) = (m[(col, j)], inv[(col, j)]);
                m.row_mut(i)[j] -= f * mv;
                inv.row_mut(i)[j] -= f * iv;
            }
        }
    }
    (inv, log_det)
}

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.std_normal())
}

pub fn random_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.std_normal()).collect()
}

pub fn exp_kernel(a: &Matrix, b: &Matrix, theta: f64) -> Matrix {
    Matrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let d: f64 = a
            .row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        (-theta * d.sqrt()).exp()
    })
}

pub fn add_identity(m: &Matrix, s: f64) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        s * m[(i, j)] + if i == j { 1.0 } else { 0.0 }
    })
}

/// Largest eigenvalue of a symmetric PSD-ish matrix by power iteration.
pub fn largest_eigenvalue(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = m.matvec(&v).unwrap();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lambda
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `max |a - b| / max |b|`
pub fn matrix_rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let scale = b.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.max_abs_diff(b) / scale
}

pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}
