//! Random-variate primitives shared by every sampler in the crate.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};

use statrs::function::erf::{erfc, erfc_inv};

/// Terms kept explicitly when summing gammas for non-integer Pólya-Gamma shapes.
pub const PG_SUM_TERMS: usize = 200;

const PG_TRUNC: f64 = 0.64;
const PG_MAX_REJECTIONS: usize = 1000;
/// Integer PG shapes above this use the gamma-sum form instead of summing
/// exact PG(1) draws, so the cost no longer grows with the shape.
pub const PG_EXACT_SHAPE_MAX: f64 = 64.0;
/// CRT Bernoulli terms drawn one by one before the remainder is approximated.
pub const CRT_EXACT_TERMS: u64 = 5_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("precision matrix is not positive definite (dimension {dim}) even after jitter")]
    NotPositiveDefinite { dim: usize },
    #[error("dimension mismatch: precision is {rows}x{cols}, linear term has length {len}")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma draw with the shape/scale convention (mean `shape * scale`).
/// Results that underflow are floored at the smallest positive normal.
pub fn gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && scale > 0.0, "gamma({shape}, {scale})");
    let g = Gamma::new(shape, scale).expect("valid gamma parameters");
    g.sample(rng).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Pólya-Gamma
// ---------------------------------------------------------------------------

/// How the fractional part of a Pólya-Gamma shape is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum PgMode {
    /// [`PG_SUM_TERMS`] explicit gamma terms.
    #[default]
    Standard,
    /// Only `terms` explicit gamma terms. The moment-matched remainder makes
    /// this accurate in mean and variance but not exact in higher moments.
    Approximate { terms: usize },
}

impl PgMode {
    fn terms(self) -> usize {
        match self {
            PgMode::Standard => PG_SUM_TERMS,
            PgMode::Approximate { terms } => terms.max(1),
        }
    }
}

/// Draw from PG(b, c).
///
/// Integer `b` sums exact PG(1, c) draws (Devroye-type alternating-series
/// rejection). The fractional part of `b` is drawn from the infinite
/// sum-of-gammas representation truncated at [`PG_SUM_TERMS`] terms, with the
/// remainder replaced by a gamma variable matching its mean and variance.
/// Shapes above [`PG_EXACT_SHAPE_MAX`] go entirely through the gamma sum.
pub fn polya_gamma<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> f64 {
    polya_gamma_with(b, c, PgMode::Standard, rng)
}

pub fn polya_gamma_with<R: Rng + ?Sized>(b: f64, c: f64, mode: PgMode, rng: &mut R) -> f64 {
    assert!(b > 0.0, "PG shape must be positive, got {b}");
    if b > PG_EXACT_SHAPE_MAX {
        return pg_gamma_sum(b, c, mode.terms(), rng);
    }
    let whole = b.floor();
    let frac = b - whole;
    let mut total = 0.0;
    for _ in 0..(whole as u64) {
        total += pg_one(c, rng);
    }
    if frac > 1e-12 {
        total += pg_gamma_sum(frac, c, mode.terms(), rng);
    }
    total
}

/// Exact PG(1, c) draw.
pub fn pg_one<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    for _ in 0..PG_MAX_REJECTIONS {
        if let Some(x) = try_jstar(z, rng) {
            return 0.25 * x;
        }
    }
    // Rejection loop exceeded its cap: fall back to the truncated sum.
    pg_gamma_sum(1.0, c, PG_SUM_TERMS, rng)
}

fn try_jstar<R: Rng + ?Sized>(z: f64, rng: &mut R) -> Option<f64> {
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let x = if rng.random::<f64>() < jstar_texpon_mass(z) {
        let e: f64 = Exp1.sample(rng);
        PG_TRUNC + e / fz
    } else {
        truncated_inverse_gaussian(z, rng)
    };
    let mut s = jstar_coef(0, x);
    let y = rng.random::<f64>() * s;
    let mut n = 0;
    loop {
        n += 1;
        if n % 2 == 1 {
            s -= jstar_coef(n, x);
            if y <= s {
                return Some(x);
            }
        } else {
            s += jstar_coef(n, x);
            if y > s {
                return None;
            }
        }
        if n > 10_000 {
            return None;
        }
    }
}

fn jstar_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > PG_TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

fn jstar_texpon_mass(z: f64) -> f64 {
    let t = PG_TRUNC;
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + normal_cdf(b).ln();
    let xa = x0 + z + normal_cdf(a).ln();
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

// Inverse Gaussian with mean 1/z and shape 1, restricted to (0, PG_TRUNC).
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = PG_TRUNC;
    if 1.0 / t > z {
        loop {
            let mut e1: f64 = Exp1.sample(rng);
            let mut e2: f64 = Exp1.sample(rng);
            while e1 * e1 > 2.0 * e2 / t {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
            }
            let x = 1.0 + e1 * t;
            let x = t / (x * x);
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let x = inverse_gaussian(mu, 1.0, rng);
            if x < t {
                return x;
            }
        }
    }
}

// Σ_k g_k / (2π² ((k-½)² + c²/(4π²))), g_k ~ Gamma(b, 1).
fn pg_gamma_sum<R: Rng + ?Sized>(b: f64, c: f64, terms: usize, rng: &mut R) -> f64 {
    let w2 = (c / (2.0 * PI)).powi(2);
    let g = Gamma::new(b, 1.0).expect("positive shape");
    let mut acc = 0.0;
    for k in 1..=terms {
        let h = k as f64 - 0.5;
        acc += g.sample(rng) / (h * h + w2);
    }
    let (tail_mean, tail_var) = pg_tail_moments(b, c, terms);
    let mut total = acc / (2.0 * PI * PI);
    if tail_mean > 0.0 && tail_var > 0.0 {
        let shape = tail_mean * tail_mean / tail_var;
        let scale = tail_var / tail_mean;
        total += Gamma::new(shape, scale).expect("positive tail moments").sample(rng);
    }
    total
}

/// Mean and variance of the omitted terms k > `kept` of the PG(b, c)
/// gamma-sum, from midpoint-rule integrals of 1/(x² + w²) and its square.
fn pg_tail_moments(b: f64, c: f64, kept: usize) -> (f64, f64) {
    let w = (c / (2.0 * PI)).abs();
    let k = kept as f64;
    let s1 = if w > 1e-12 { (w / k).atan() / w } else { 1.0 / k };
    let s2 = if w < 1e-3 * k {
        1.0 / (3.0 * k.powi(3)) - 2.0 * w * w / (5.0 * k.powi(5))
    } else {
        (w / k).atan() / (2.0 * w.powi(3)) - k / (2.0 * w * w * (k * k + w * w))
    };
    let mean = b * s1 / (2.0 * PI * PI);
    let var = b * s2 / (4.0 * PI.powi(4));
    (mean, var)
}

/// E[PG(b, c)] = b/(2c) tanh(c/2), with the c → 0 limit b/4.
pub fn polya_gamma_mean(b: f64, c: f64) -> f64 {
    if c.abs() < 1e-8 {
        b / 4.0
    } else {
        b / (2.0 * c) * (0.5 * c).tanh()
    }
}

/// Var[PG(b, c)] = b (sinh c - c) / (4 c³ cosh²(c/2)), with the c → 0 limit b/24.
pub fn polya_gamma_var(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        b * (1.0 / 24.0 - c * c / 120.0)
    } else {
        b * (c.sinh() - c) / (4.0 * c.powi(3) * (0.5 * c).cosh().powi(2))
    }
}

// ---------------------------------------------------------------------------
// Truncated normal, inverse Gaussian, CRT, Poisson
// ---------------------------------------------------------------------------

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Normal(mu, sigma²) restricted to one side of zero.
pub fn truncated_normal<R: Rng + ?Sized>(mu: f64, sigma: f64, side: Side, rng: &mut R) -> f64 {
    match side {
        Side::Positive => mu + sigma * std_normal_above(-mu / sigma, rng),
        Side::Negative => -(-mu + sigma * std_normal_above(mu / sigma, rng)),
    }
}

/// Standard normal conditioned on exceeding `a`.
fn std_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 5.0 {
        // inverse CDF on the upper tail: Z = -Φ⁻¹(u Φ(-a))
        let upper = normal_cdf(-a);
        loop {
            let u: f64 = rng.random();
            let z = -normal_quantile(u * upper);
            if z.is_finite() && z > a {
                return z;
            }
        }
    } else {
        // exponential proposal with the optimal rate
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = a + e / rate;
            let u: f64 = rng.random();
            if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
                return z;
            }
        }
    }
}

/// Inverse Gaussian with mean `mu` and shape `shape`
/// (Michael–Schucany–Haas transformation).
pub fn inverse_gaussian<R: Rng + ?Sized>(mu: f64, shape: f64, rng: &mut R) -> f64 {
    let v = std_normal(rng);
    let r = mu * v * v / (2.0 * shape);
    // μ(1 + r - √(r² + 2r)) written without cancellation
    let x = mu / (1.0 + r + (r * r + 2.0 * r).sqrt());
    let u: f64 = rng.random();
    let out = if u <= mu / (mu + x) { x } else { mu * mu / x };
    out.max(f64::MIN_POSITIVE)
}

/// Chinese-restaurant-table count: Σ_{i=1..m} Bernoulli(r / (r + i - 1)).
///
/// The first [`CRT_EXACT_TERMS`] terms are drawn exactly. Any remainder is a
/// sum of many Bernoullis: Poisson when every probability is below 0.05,
/// otherwise a rounded normal, both matching the remainder's mean.
pub fn crt<R: Rng + ?Sized>(m: u64, r: f64, rng: &mut R) -> u64 {
    if m == 0 {
        return 0;
    }
    let exact = m.min(CRT_EXACT_TERMS);
    let mut tables = 1;
    for i in 1..exact {
        if rng.random::<f64>() < r / (r + i as f64) {
            tables += 1;
        }
    }
    if exact == m {
        return tables;
    }
    // terms i = exact..m-1 via midpoint integrals of r/(r+x) and r x/(r+x)²
    let (lo, hi) = (exact as f64 - 0.5, m as f64 - 0.5);
    let ln_ratio = ((r + hi) / (r + lo)).ln();
    let mean = r * ln_ratio;
    let rest = m - exact;
    let extra = if r / (r + exact as f64) < 0.05 {
        poisson(mean, rng).min(rest)
    } else {
        let var = r * (ln_ratio + r / (r + hi) - r / (r + lo));
        let draw = mean + var.max(0.0).sqrt() * std_normal(rng);
        (draw.round().max(0.0) as u64).min(rest)
    };
    tables + extra
}

pub fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let p = Poisson::new(rate).expect("positive rate");
    p.sample(rng) as u64
}

/// Poisson(rate) conditioned on being at least one.
pub fn truncated_poisson_positive<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate > 1.0 {
        for _ in 0..10_000 {
            let k = poisson(rate, rng);
            if k >= 1 {
                return k;
            }
        }
    }
    // inverse CDF over k ≥ 1 with normalizer e^rate - 1
    let target = rng.random::<f64>() * rate.exp_m1();
    let mut k = 1u64;
    let mut term = rate;
    let mut cum = term;
    while cum < target && k < 100_000 {
        k += 1;
        term *= rate / k as f64;
        cum += term;
    }
    k
}

// ---------------------------------------------------------------------------
// Multivariate normal in canonical form
// ---------------------------------------------------------------------------

/// Draw from N(Q⁻¹h, Q⁻¹) via the Cholesky factor of the precision `q`.
/// A failed factorization is retried once with a small diagonal jitter.
pub fn mvn_draw<R: Rng + ?Sized>(
    q: &DMatrix<f64>,
    h: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>, SamplingError> {
    let d = q.nrows();
    if q.ncols() != d || h.len() != d {
        return Err(SamplingError::DimensionMismatch { rows: d, cols: q.ncols(), len: h.len() });
    }
    let chol = match q.clone().cholesky() {
        Some(c) => c,
        None => {
            let scale = (q.trace() / d.max(1) as f64).abs().max(1e-12);
            let mut jittered = q.clone();
            for i in 0..d {
                jittered[(i, i)] += 1e-8 * scale;
            }
            jittered.cholesky().ok_or(SamplingError::NotPositiveDefinite { dim: d })?
        }
    };
    let mean = chol.solve(h);
    let z = DVector::from_fn(d, |_, _| std_normal(rng));
    // Lᵀ x = z gives Cov(x) = (L Lᵀ)⁻¹
    let l = chol.l();
    let dev = l
        .tr_solve_lower_triangular(&z)
        .ok_or(SamplingError::NotPositiveDefinite { dim: d })?;
    Ok(mean + dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn pg_mean_formula_limits() {
        assert!((polya_gamma_mean(1.0, 0.0) - 0.25).abs() < 1e-15);
        assert!((polya_gamma_mean(1.0, 2.0) - 1f64.tanh() / 4.0).abs() < 1e-15);
        assert!((polya_gamma_var(1.0, 0.0) - 1.0 / 24.0).abs() < 1e-15);
        let (a, b) = (polya_gamma_var(1.0, 0.999e-3), polya_gamma_var(1.0, 1.001e-3));
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn pg_tail_moments_match_closed_form_totals() {
        // kept = 0 must recover the full-series moments
        for &c in &[0.0, 0.5, 3.0] {
            let exact_mean = polya_gamma_mean(1.0, c);
            let partial: f64 = (1..=2000)
                .map(|k| {
                    let h = k as f64 - 0.5;
                    1.0 / (2.0 * PI * PI * (h * h + (c / (2.0 * PI)).powi(2)))
                })
                .sum();
            let (tail, _) = pg_tail_moments(1.0, c, 2000);
            assert!((partial + tail - exact_mean).abs() < 1e-10, "c={c}");
        }
    }

    #[test]
    fn pg_moments_fractional_and_integer() {
        let mut rng = RngStream::new(11).rng();
        for &(b, c) in &[(1.0, 0.0), (0.3, 1.5), (2.7, -2.0), (4.0, 5.0)] {
            let n = 40_000;
            let xs: Vec<f64> = (0..n).map(|_| polya_gamma(b, c, &mut rng)).collect();
            let (m, v) = moments(&xs);
            let se = (polya_gamma_var(b, c) / n as f64).sqrt();
            assert!((m - polya_gamma_mean(b, c)).abs() < 4.0 * se, "b={b} c={c} mean {m}");
            assert!((v / polya_gamma_var(b, c) - 1.0).abs() < 0.1, "b={b} c={c} var {v}");
        }
    }

    #[test]
    fn truncated_normal_respects_side() {
        let mut rng = RngStream::new(3).rng();
        for &(mu, side) in &[(-9.0, Side::Positive), (2.0, Side::Positive), (0.3, Side::Negative), (12.0, Side::Negative)] {
            for _ in 0..2000 {
                let x = truncated_normal(mu, 1.3, side, &mut rng);
                match side {
                    Side::Positive => assert!(x > 0.0),
                    Side::Negative => assert!(x < 0.0),
                }
            }
        }
    }

    #[test]
    fn inverse_gaussian_huge_mean_is_finite() {
        let mut rng = RngStream::new(5).rng();
        for _ in 0..1000 {
            let x = inverse_gaussian(1e10, 1.0, &mut rng);
            assert!(x.is_finite() && x > 0.0);
        }
    }

    #[test]
    fn crt_edge_cases() {
        let mut rng = RngStream::new(1).rng();
        assert_eq!(crt(0, 2.5, &mut rng), 0);
        for _ in 0..100 {
            assert_eq!(crt(1, 0.01, &mut rng), 1);
            let l = crt(7, 1.0, &mut rng);
            assert!((1..=7).contains(&l));
        }
    }

    #[test]
    fn truncated_poisson_is_positive() {
        let mut rng = RngStream::new(2).rng();
        for &rate in &[1e-300, 1e-6, 0.4, 1.0, 3.0, 40.0] {
            for _ in 0..500 {
                assert!(truncated_poisson_positive(rate, &mut rng) >= 1);
            }
        }
        // tiny rate: mass concentrates on 1
        assert_eq!(truncated_poisson_positive(1e-12, &mut rng), 1);
    }

    #[test]
    fn mvn_rejects_indefinite() {
        let mut rng = RngStream::new(4).rng();
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let h = DVector::zeros(2);
        assert_eq!(mvn_draw(&q, &h, &mut rng), Err(SamplingError::NotPositiveDefinite { dim: 2 }));
    }

    #[test]
    fn mvn_one_dimensional_moments() {
        let mut rng = RngStream::new(8).rng();
        let q = DMatrix::from_element(1, 1, 4.0);
        let h = DVector::from_element(1, 4.0);
        let xs: Vec<f64> = (0..50_000).map(|_| mvn_draw(&q, &h, &mut rng).unwrap()[0]).collect();
        let (m, v) = moments(&xs);
        assert!((m - 1.0).abs() < 4.0 * (0.25f64 / 50_000.0).sqrt());
        assert!((v - 0.25).abs() < 0.01);
    }
}
