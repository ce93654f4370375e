//! Synthetic datasets: nested squares, contaminated copies of a dataset,
//! and a two-class swiss roll.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use pasb_core::data::{Dataset, LabelMap};
use pasb_core::rng::RngStream;
use pasb_core::sampling::std_normal;
use pasb_core::DataError;
use rand::Rng;

/// Points uniform on a square of side m + 2 centred at the origin. The
/// one-unit frame is category 1; the inner m × m unit squares are categories
/// 2..=m²+1, numbered row by row from the bottom left. `inner_squares` must
/// be a perfect square.
pub fn nested_squares(inner_squares: usize, n: usize, stream: &RngStream) -> Result<Dataset, DataError> {
    let m = (inner_squares as f64).sqrt().round() as usize;
    if m == 0 || m * m != inner_squares {
        return Err(DataError::Invalid(format!("{inner_squares} inner squares is not a positive perfect square")));
    }
    let half = (m as f64 + 2.0) / 2.0;
    let mut rng = stream.rng();
    let mut cov = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let a = rng.random_range(-half..half);
        let b = rng.random_range(-half..half);
        cov[(i, 0)] = a;
        cov[(i, 1)] = b;
        // shift so the inner block spans [0, m)
        let (u, v) = (a + half - 1.0, b + half - 1.0);
        let inside = u >= 0.0 && v >= 0.0 && u < m as f64 && v < m as f64;
        y.push(if inside { 1 + (v.floor() as usize) * m + u.floor() as usize } else { 0 });
    }
    Dataset::from_covariates(cov, y, LabelMap::numeric(inner_squares + 1), false)
}

/// The 101-category layout: 8000 points on [-6, 6]².
pub fn square101(stream: &RngStream) -> Dataset {
    nested_squares(100, 8000, stream).expect("100 is a perfect square")
}

/// Number of outliers added at a given outlier-to-inlier ratio.
pub fn outlier_count(n_inliers: usize, ratio: f64) -> Result<usize, DataError> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(DataError::Invalid(format!("outlier ratio must be a non-negative number, got {ratio}")));
    }
    Ok((n_inliers as f64 * ratio).round() as usize)
}

/// Far-away rows: covariates 4-6 uniform on (-3,-2) ∪ (2,3), every other
/// covariate uniform on (-1, 1), label uniform over the existing labels.
pub fn outliers(n_covariates: usize, labels: &LabelMap, count: usize, stream: &RngStream) -> Result<Dataset, DataError> {
    if n_covariates < 6 {
        return Err(DataError::Invalid(format!("outliers need at least 6 covariates, dataset has {n_covariates}")));
    }
    let mut rng = stream.rng();
    let mut cov = DMatrix::zeros(count, n_covariates);
    let mut y = Vec::with_capacity(count);
    for i in 0..count {
        for j in 0..n_covariates {
            cov[(i, j)] = if (3..6).contains(&j) {
                let mag = rng.random_range(2.0..3.0);
                if rng.random::<bool>() { mag } else { -mag }
            } else {
                rng.random_range(-1.0..1.0)
            };
        }
        y.push(rng.random_range(0..labels.len()));
    }
    Dataset::from_covariates(cov, y, labels.clone(), false)
}

/// Two interleaved spiral arms with Gaussian noise; arm c is category c + 1.
pub fn swiss_roll(n: usize, noise: f64, stream: &RngStream) -> Result<Dataset, DataError> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(DataError::Invalid(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = stream.rng();
    let mut cov = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let arm = i % 2;
        let t = PI / 2.0 + rng.random::<f64>().sqrt() * 2.5 * PI;
        let radius = t / (3.0 * PI);
        let sign = if arm == 0 { 1.0 } else { -1.0 };
        cov[(i, 0)] = sign * radius * t.cos() + noise * std_normal(&mut rng);
        cov[(i, 1)] = sign * radius * t.sin() + noise * std_normal(&mut rng);
        y.push(arm);
    }
    Dataset::from_covariates(cov, y, LabelMap::numeric(2), false)
}
