mod common;

use common::*;
use lssid::benchmark::two_mode_system;
use lssid::covariance::{empirical_covariances, exact_covariances, CovarianceWords};
use lssid::simulate::simulate;
use lssid::{SimConfig, SwitchedModel};
use nalgebra::DMatrix;

fn three_mode_mimo() -> SwitchedModel {
    let m = |r: usize, c: usize, v: &[f64]| DMatrix::from_row_slice(r, c, v);
    SwitchedModel {
        a: vec![
            m(2, 2, &[0.4, 0.1, -0.2, 0.3]),
            m(2, 2, &[-0.3, 0.2, 0.1, 0.5]),
            m(2, 2, &[0.2, -0.4, 0.3, 0.1]),
        ],
        b: vec![
            m(2, 1, &[1.0, 0.5]),
            m(2, 1, &[-0.4, 1.2]),
            m(2, 1, &[0.3, -0.7]),
        ],
        k: vec![
            m(2, 2, &[0.5, 0.0, 0.2, 0.3]),
            m(2, 2, &[0.1, 0.4, -0.2, 0.2]),
            m(2, 2, &[0.3, -0.1, 0.0, 0.6]),
        ],
        c: m(2, 2, &[1.0, 0.2, -0.3, 0.8]),
        d: m(2, 1, &[0.5, -0.2]),
        f: DMatrix::identity(2, 2),
        p: vec![0.2, 0.3, 0.5],
        q_u: m(1, 1, &[1.0 / 3.0]),
        q_v: vec![
            m(2, 2, &[0.2, 0.02, 0.02, 0.1]) * 0.2,
            m(2, 2, &[0.5, 0.1, 0.1, 0.3]) * 0.3,
            m(2, 2, &[0.4, 0.0, 0.0, 0.4]) * 0.5,
        ],
    }
}

#[test]
fn benchmark_table_matches_direct_oracle() {
    let m = two_mode_system(1.5);
    let cov = exact_covariances(&m, 4).unwrap();
    assert_eq!(cov.lambda_yy.len(), 30);
    let gap = max_table_gap(&cov, &m);
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn mimo_three_mode_table_matches_direct_oracle() {
    let m = three_mode_mimo();
    let cov = exact_covariances(&m, 3).unwrap();
    let gap = max_table_gap(&cov, &m);
    assert!(gap < 1e-9, "{gap}");
}

#[test]
fn empirical_covariances_approach_the_oracle() {
    let m = three_mode_mimo();
    let sim = simulate(&m, &SimConfig::new(11, 400_000)).unwrap();
    let words = CovarianceWords::all_up_to(3, 2);
    let emp = empirical_covariances(&sim.data, &m.p, &words).unwrap();
    let p = total_state_covariance(&m);
    let scale = oracle_t_yy(&m, &p, 0).amax();
    let mut gap: f64 = 0.0;
    for (w, v) in emp.lambda_yy.iter() {
        gap = gap.max((v - oracle_lambda_yy(&m, &p, w)).amax());
    }
    for (w, v) in emp.lambda_yu.iter() {
        gap = gap.max((v - oracle_lambda_yu(&m, w)).amax());
    }
    for (s, t) in emp.t_yy.iter().enumerate() {
        gap = gap.max((t - oracle_t_yy(&m, &p, s)).amax());
    }
    assert!(gap < 0.03 * scale, "gap {gap}, scale {scale}");
}

#[test]
fn scalar_kalman_oracle_solves_the_riccati_equation() {
    for &(a, c, f, k, q) in &[(0.5, 1.0, 1.0, 2.0, 1.0), (0.5, 1.0, 1.0, 0.2, 1.0), (-0.7, 2.0, 0.5, 1.5, 3.0)] {
        let (p, var, gain) = scalar_kalman(a, c, f, k, q);
        let next = a * a * p + k * k * q - (a * p * c + k * q * f).powi(2) / var;
        assert!((next - p).abs() < 1e-12, "{a} {k}: {next} vs {p}");
        assert!((a - gain * c).abs() < 1.0);
    }
}
