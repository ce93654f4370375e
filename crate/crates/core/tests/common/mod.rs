#![allow(dead_code)]

use pasb_core::diagnostics::ess;

/// Asymptotic Kolmogorov distribution tail with the Stephens correction.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let lam = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    if lam < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lam * lam).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

pub fn ks_one_sample(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Standardized errors of the sample mean and variance against analytic
/// values, using the sample fourth moment for the variance's standard error.
pub fn moment_z(xs: &[f64], mean: f64, var: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let z_mean = (m - mean) / (var / n).sqrt();
    let z_var = (v - var) / ((m4 - v * v).max(1e-300) / n).sqrt();
    (z_mean, z_var)
}

/// Mean and ESS-based Monte Carlo standard error of a correlated chain.
pub fn chain_mean_se(chain: &[f64]) -> (f64, f64) {
    let n = chain.len() as f64;
    let m = chain.iter().sum::<f64>() / n;
    let v = chain.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let e = ess(chain).value;
    (m, (v / e).sqrt())
}

/// Posterior mean and standard deviation of a scalar on a uniform grid.
pub fn grid_moments(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let h = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| lo + i as f64 * h).collect();
    let lds: Vec<f64> = xs.iter().map(|&x| log_density(x)).collect();
    let top = lds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lds.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let mean = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
    let var = xs.iter().zip(&w).map(|(x, w)| (x - mean).powi(2) * w).sum::<f64>() / z;
    (mean, var.sqrt())
}
