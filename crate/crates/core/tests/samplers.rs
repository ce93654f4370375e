mod common;

use std::f64::consts::PI;

use common::{ks_one_sample, ks_pvalue, ks_two_sample, moment_z};
use nalgebra::{DMatrix, DVector};
use pasb_core::rng::RngStream;
use pasb_core::sampling::{
    crt, gamma, inverse_gaussian, mvn_draw, pg_one, polya_gamma, polya_gamma_mean, polya_gamma_var,
    polya_gamma_with, truncated_normal, PgMode, Side,
};
use statrs::function::erf::erfc;

const MILLION: usize = 1_000_000;

fn assert_moments(label: &str, xs: &[f64], mean: f64, var: f64) {
    let (zm, zv) = moment_z(xs, mean, var);
    assert!(zm.abs() < 4.0 && zv.abs() < 4.0, "{label}: z_mean {zm:.2}, z_var {zv:.2}");
}

/// CDF of PG(1, c) from the inverted Laplace transform of J*(1, c/2) = 4 PG(1, c).
fn pg_one_cdf(y: f64, c: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let x = 4.0 * y;
    let z = 0.5 * c;
    let mut sum = 0.0;
    for n in 0..200_000 {
        let k = n as f64 + 0.5;
        let lambda = 0.5 * z * z + 0.5 * k * k * PI * PI;
        let decay = (-lambda * x).exp();
        let term = PI * k * decay / lambda;
        sum += if n % 2 == 0 { term } else { -term };
        if decay < 1e-20 && n > 10 {
            break;
        }
    }
    (1.0 - z.cosh() * sum).clamp(0.0, 1.0)
}

#[test]
fn pg_series_cdf_is_a_distribution() {
    for c in [0.0, 1.0, 3.0] {
        assert!(pg_one_cdf(1e-3, c) < 1e-12);
        assert!((pg_one_cdf(50.0, c) - 1.0).abs() < 1e-12);
        // median sits near the mean for this mildly skewed law
        let m = polya_gamma_mean(1.0, c);
        let f = pg_one_cdf(m, c);
        assert!(f > 0.45 && f < 0.7, "c={c} F(mean)={f}");
    }
}

#[test]
fn pg_one_ks_against_series_cdf() {
    for (i, c) in [0.0, 1.0, 3.0].into_iter().enumerate() {
        let mut rng = RngStream::new(11).child(i as u64).rng();
        let xs: Vec<f64> = (0..50_000).map(|_| pg_one(c, &mut rng)).collect();
        let n = xs.len() as f64;
        let d = ks_one_sample(xs, |y| pg_one_cdf(y, c));
        let p = ks_pvalue(d, n);
        assert!(p > 0.001, "c={c}: D={d:.5}, p={p:.2e}");
    }
}

#[test]
fn pg_approximate_matches_standard_in_distribution() {
    for (i, (b, c)) in [(0.4, 1.0), (2.3, 0.5), (0.05, 3.0)].into_iter().enumerate() {
        let mut r1 = RngStream::new(12).child(i as u64).rng();
        let mut r2 = RngStream::new(13).child(i as u64).rng();
        let a: Vec<f64> = (0..20_000).map(|_| polya_gamma_with(b, c, PgMode::Approximate { terms: 20 }, &mut r1)).collect();
        let s: Vec<f64> = (0..20_000).map(|_| polya_gamma(b, c, &mut r2)).collect();
        let d = ks_two_sample(a, s);
        let p = ks_pvalue(d, 10_000.0);
        assert!(p > 0.001, "PG({b},{c}): D={d:.5}, p={p:.2e}");
    }
}

#[test]
fn pg_two_moments() {
    let cases = [(1.0, 0.0), (1.0, 2.0), (2.0, 1.5), (0.7, 1.5), (3.4, -4.0), (500.0, 3.0), (2e4, 0.5)];
    for (i, (b, c)) in cases.into_iter().enumerate() {
        let mut rng = RngStream::new(14).child(i as u64).rng();
        let xs: Vec<f64> = (0..MILLION).map(|_| polya_gamma(b, c, &mut rng)).collect();
        assert_moments(&format!("PG({b},{c})"), &xs, polya_gamma_mean(b, c), polya_gamma_var(b, c));
    }
    assert!((polya_gamma_mean(1.0, 0.0) - 0.25).abs() < 1e-15);
    assert!((polya_gamma_mean(1.0, 2.0) - 1f64.tanh() / 4.0).abs() < 1e-15);
    assert!((polya_gamma_mean(2.0, 1.3) - 2.0 * polya_gamma_mean(1.0, 1.3)).abs() < 1e-15);
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn truncated_normal_moments(mu: f64, sigma: f64, side: Side) -> (f64, f64) {
    // positive side of N(mu, sigma); the negative side mirrors it
    let (m, flip) = match side {
        Side::Positive => (mu, 1.0),
        Side::Negative => (-mu, -1.0),
    };
    let a = -m / sigma;
    let phi = (-0.5 * a * a).exp() / (2.0 * PI).sqrt();
    let lam = phi / normal_cdf(-a);
    let mean = m + sigma * lam;
    let var = sigma * sigma * (1.0 + a * lam - lam * lam);
    (flip * mean, var)
}

#[test]
fn truncated_normal_two_moments() {
    let cases = [(0.0, 1.0, Side::Positive), (8.0, 1.0, Side::Positive), (-1.0, 2.0, Side::Negative), (-7.0, 1.0, Side::Positive)];
    for (i, (mu, sigma, side)) in cases.into_iter().enumerate() {
        let mut rng = RngStream::new(15).child(i as u64).rng();
        let xs: Vec<f64> = (0..MILLION).map(|_| truncated_normal(mu, sigma, side, &mut rng)).collect();
        assert!(xs.iter().all(|&x| match side {
            Side::Positive => x > 0.0,
            Side::Negative => x < 0.0,
        }));
        let (m, v) = truncated_normal_moments(mu, sigma, side);
        assert_moments(&format!("TN({mu},{sigma},{side:?})"), &xs, m, v);
    }
    let (m, _) = truncated_normal_moments(0.0, 1.0, Side::Positive);
    assert!((m - (2.0 / PI).sqrt()).abs() < 1e-12);
}

#[test]
fn inverse_gaussian_two_moments() {
    for (i, (mu, shape)) in [(1.0, 1.0), (2.0, 3.0), (0.1, 1.0), (5.0, 0.5)].into_iter().enumerate() {
        let mut rng = RngStream::new(16).child(i as u64).rng();
        let xs: Vec<f64> = (0..MILLION).map(|_| inverse_gaussian(mu, shape, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        assert_moments(&format!("IG({mu},{shape})"), &xs, mu, mu.powi(3) / shape);
    }
}

#[test]
fn crt_two_moments() {
    let cases = [(10u64, 1.0, MILLION), (40, 0.3, MILLION), (5, 7.0, MILLION), (40_000, 2.0, 20_000), (60_000, 800.0, 20_000)];
    for (i, (m, r, draws)) in cases.into_iter().enumerate() {
        let mut rng = RngStream::new(17).child(i as u64).rng();
        let xs: Vec<f64> = (0..draws).map(|_| crt(m, r, &mut rng) as f64).collect();
        let ps: Vec<f64> = (1..=m).map(|j| r / (r + j as f64 - 1.0)).collect();
        let mean: f64 = ps.iter().sum();
        let var: f64 = ps.iter().map(|p| p * (1.0 - p)).sum();
        assert_moments(&format!("CRT({m},{r})"), &xs, mean, var);
    }
    let harmonic: f64 = (1..=10).map(|i| 1.0 / i as f64).sum();
    assert!((harmonic - 2.928968).abs() < 1e-6);
}

#[test]
fn gamma_two_moments() {
    for (i, (shape, scale)) in [(0.3, 2.0), (4.5, 0.5)].into_iter().enumerate() {
        let mut rng = RngStream::new(18).child(i as u64).rng();
        let xs: Vec<f64> = (0..MILLION).map(|_| gamma(shape, scale, &mut rng)).collect();
        assert_moments(&format!("Gamma({shape},{scale})"), &xs, shape * scale, shape * scale * scale);
    }
}

#[test]
fn mvn_two_moments() {
    let mut rng = RngStream::new(19).rng();
    let q = DMatrix::from_element(1, 1, 4.0);
    let h = DVector::from_element(1, 4.0);
    let xs: Vec<f64> = (0..MILLION).map(|_| mvn_draw(&q, &h, &mut rng).unwrap()[0]).collect();
    assert_moments("mvn 1-D", &xs, 1.0, 0.25);

    // Q = [[2, 1], [1, 2]], h = (1, 0): mean (2/3, -1/3), cov Q⁻¹
    let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let h = DVector::from_column_slice(&[1.0, 0.0]);
    let draws: Vec<DVector<f64>> = (0..MILLION).map(|_| mvn_draw(&q, &h, &mut rng).unwrap()).collect();
    let first: Vec<f64> = draws.iter().map(|d| d[0]).collect();
    let second: Vec<f64> = draws.iter().map(|d| d[1]).collect();
    let sum: Vec<f64> = draws.iter().map(|d| d[0] + d[1]).collect();
    assert_moments("mvn x0", &first, 2.0 / 3.0, 2.0 / 3.0);
    assert_moments("mvn x1", &second, -1.0 / 3.0, 2.0 / 3.0);
    // var(x0 + x1) = 2/3 + 2/3 - 2/3
    assert_moments("mvn x0+x1", &sum, 1.0 / 3.0, 2.0 / 3.0);
}
