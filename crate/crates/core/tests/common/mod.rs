#![allow(dead_code)]

use lssid::covariance::CovarianceTable;
use lssid::linalg::kron;
use lssid::word::{matrix_product_along_word, word_probability};
use lssid::{SwitchedModel, Word};
use nalgebra::DMatrix;

/// Unconditional state covariance from the vectorized Lyapunov equation,
/// solved directly rather than by iteration.
pub fn total_state_covariance(m: &SwitchedModel) -> DMatrix<f64> {
    let n = m.n_x();
    let mut lhs = DMatrix::identity(n * n, n * n);
    let mut forcing = DMatrix::zeros(n, n);
    for s in 0..m.modes() {
        lhs -= kron(&m.a[s], &m.a[s]) * m.p[s];
        forcing += &m.b[s] * &m.q_u * m.b[s].transpose() * m.p[s];
        forcing += &m.k[s] * &m.q_v[s] * m.k[s].transpose();
    }
    let rhs = DMatrix::from_column_slice(n * n, 1, forcing.as_slice());
    let v = lhs.lu().solve(&rhs).expect("stable model");
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// `E[y(t) z^u_w(t)ᵀ]` written out from the state recursion.
pub fn oracle_lambda_yu(m: &SwitchedModel, w: &Word) -> DMatrix<f64> {
    match w.split_first() {
        None => &m.d * &m.q_u,
        Some((s, rest)) => {
            let pw = word_probability(&m.p, w).unwrap();
            let a_s = matrix_product_along_word(&m.a, &rest).unwrap();
            &m.c * a_s * &m.b[s - 1] * &m.q_u * pw.sqrt()
        }
    }
}

/// `E[y(t) z^y_w(t)ᵀ]` for a nonempty word.
pub fn oracle_lambda_yy(m: &SwitchedModel, p: &DMatrix<f64>, w: &Word) -> DMatrix<f64> {
    let (s, rest) = w.split_first().expect("nonempty word");
    let i = s - 1;
    let pw = word_probability(&m.p, w).unwrap();
    let a_s = matrix_product_along_word(&m.a, &rest).unwrap();
    let cross = &m.a[i] * p * m.c.transpose()
        + &m.b[i] * &m.q_u * m.d.transpose()
        + &m.k[i] * (&m.q_v[i] / m.p[i]) * m.f.transpose();
    &m.c * a_s * cross * pw.sqrt()
}

/// `E[y(t) y(t)ᵀ | q(t) = σ]`.
pub fn oracle_t_yy(m: &SwitchedModel, p: &DMatrix<f64>, s: usize) -> DMatrix<f64> {
    &m.c * p * m.c.transpose()
        + &m.d * &m.q_u * m.d.transpose()
        + &m.f * (&m.q_v[s] / m.p[s]) * m.f.transpose()
}

pub fn max_table_gap(cov: &CovarianceTable, m: &SwitchedModel) -> f64 {
    let p = total_state_covariance(m);
    let mut gap: f64 = 0.0;
    for (w, v) in cov.lambda_yu.iter() {
        gap = gap.max((v - oracle_lambda_yu(m, w)).amax());
    }
    for (w, v) in cov.lambda_yy.iter() {
        gap = gap.max((v - oracle_lambda_yy(m, &p, w)).amax());
    }
    for (s, t) in cov.t_yy.iter().enumerate() {
        gap = gap.max((t - oracle_t_yy(m, &p, s)).amax());
    }
    gap
}

/// Scalar single-mode system `x⁺ = a x + b u + k v`, `y = c x + d u + v`
/// with unit noise variance.
pub fn scalar_lti(a: f64, b: f64, c: f64, d: f64, k: f64) -> SwitchedModel {
    let s = |x: f64| DMatrix::from_element(1, 1, x);
    SwitchedModel {
        a: vec![s(a)],
        b: vec![s(b)],
        k: vec![s(k)],
        c: s(c),
        d: s(d),
        f: s(1.0),
        p: vec![1.0],
        q_u: s(1.0),
        q_v: vec![s(1.0)],
    }
}

/// Classical scalar Kalman quantities for `x⁺ = a x + k v`, `y = c x + f v`
/// with noise variance `q`: stationary prediction-error variance,
/// innovation variance and the steady-state gain. The error variance is
/// zero when the noise model is minimum phase and otherwise follows from
/// reflecting the zero `a - k c / f` into the unit disc.
pub fn scalar_kalman(a: f64, c: f64, f: f64, k: f64, q: f64) -> (f64, f64, f64) {
    let p = (q * ((k * c - a * f).powi(2) - f * f) / (c * c)).max(0.0);
    let var = c * c * p + f * f * q;
    let gain = (a * p * c + k * q * f) / var;
    (p, var, gain)
}
