//! Binary stick links: Pólya-Gamma logistic, robit, and the SVM
//! pseudo-likelihood, plus dispatch over all families including MSR.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::sampling::{
    gamma, inverse_gaussian, mvn_draw, pg_one, std_normal, truncated_normal, SamplingError, Side,
};
use crate::softplus::{msr_pi_from_params, MsrLinkState, MsrParams, MsrSpec};

/// Stick probabilities are kept inside [PI_EPS, 1 - PI_EPS].
pub const PI_EPS: f64 = 1e-12;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PI_EPS, 1.0 - PI_EPS)
}

/// σ(η) = 1 / (1 + e^{-η}), clamped.
pub fn logistic_pi(eta: f64) -> f64 {
    let p = if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    };
    clamp_prob(p)
}

/// Student-t CDF with `dof` degrees of freedom at η, clamped.
pub fn robit_pi(eta: f64, dof: f64) -> f64 {
    let t = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    clamp_prob(t.cdf(eta))
}

/// Probability implied by the hinge pseudo-likelihood after normalizing over
/// the two labels.
pub fn svm_pi(eta: f64) -> f64 {
    let arg = if eta.abs() <= 1.0 { 2.0 * eta } else { eta + eta.signum() };
    logistic_pi(arg)
}

/// Independent Normal(0, 1/α_v) coefficients with α_v ~ Gamma(shape, rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArdPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for ArdPrior {
    fn default() -> Self {
        Self { shape: 1e-3, rate: 1e-3 }
    }
}

impl ArdPrior {
    pub fn update<R: Rng + ?Sized>(&self, beta: &DVector<f64>, alpha: &mut DVector<f64>, rng: &mut R) {
        for (a, b) in alpha.iter_mut().zip(beta.iter()) {
            let rate = self.rate + 0.5 * b * b;
            *a = gamma(self.shape + 0.5, 1.0 / rate, rng);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSpec {
    pub slab_variance: f64,
    /// Prior probability that a coefficient is exactly zero.
    pub spike_prob: f64,
}

impl Default for SvmSpec {
    fn default() -> Self {
        Self { slab_variance: 1.0, spike_prob: 0.5 }
    }
}

/// Which binary classifier sits on every stick, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LinkSpec {
    Logistic,
    Robit { dof: f64 },
    Svm(SvmSpec),
    Msr(MsrSpec),
}

impl LinkSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LinkSpec::Logistic => "logistic",
            LinkSpec::Robit { .. } => "robit",
            LinkSpec::Svm(_) => "svm",
            LinkSpec::Msr(_) => "msr",
        }
    }
}

/// Parameters needed to evaluate a stick probability; what the trace keeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LinkParams {
    Linear(Vec<f64>),
    Msr(MsrParams),
}

impl LinkParams {
    pub fn dim(&self) -> usize {
        match self {
            LinkParams::Linear(b) => b.len(),
            LinkParams::Msr(p) => p.dim(),
        }
    }

    /// Stick probability for every row of `x`.
    pub fn pi(&self, spec: &LinkSpec, x: &DMatrix<f64>) -> Vec<f64> {
        match self {
            LinkParams::Linear(beta) => {
                let beta = DVector::from_column_slice(beta);
                let eta = x * beta;
                eta.iter().map(|&e| linear_pi(spec, e)).collect()
            }
            LinkParams::Msr(p) => (0..x.nrows()).map(|i| msr_pi_from_params(p, &x.row(i).transpose())).collect(),
        }
    }
}

fn linear_pi(spec: &LinkSpec, eta: f64) -> f64 {
    match spec {
        LinkSpec::Logistic => logistic_pi(eta),
        LinkSpec::Robit { dof } => robit_pi(eta, *dof),
        LinkSpec::Svm(_) => svm_pi(eta),
        LinkSpec::Msr(_) => panic!("MSR parameters are not linear"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticLink {
    pub beta: DVector<f64>,
    pub alpha: DVector<f64>,
    pub omega: DVector<f64>,
    pub prior: ArdPrior,
}

impl LogisticLink {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            beta: DVector::zeros(d),
            alpha: DVector::from_element(d, 1.0),
            omega: DVector::from_element(n, 0.25),
            prior: ArdPrior::default(),
        }
    }

    /// One Gibbs sweep: ω | β, then β | ω, then α | β.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        b: &[bool],
        x: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<(), SamplingError> {
        let eta = x * &self.beta;
        self.omega = eta.map(|e| pg_one(e, rng));
        let kappa = DVector::from_iterator(b.len(), b.iter().map(|&v| if v { 0.5 } else { -0.5 }));
        self.beta = gaussian_regression_draw(x, &self.omega, &kappa, &self.alpha, rng)?;
        self.prior.update(&self.beta, &mut self.alpha, rng);
        Ok(())
    }
}

/// β ~ N(Q⁻¹h, Q⁻¹) with Q = X'WX + diag(α) and h = X'v.
pub(crate) fn gaussian_regression_draw<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    weights: &DVector<f64>,
    v: &DVector<f64>,
    alpha: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>, SamplingError> {
    let mut xw = x.clone();
    for mut col in xw.column_iter_mut() {
        col.component_mul_assign(weights);
    }
    let mut q = x.tr_mul(&xw);
    for (i, a) in alpha.iter().enumerate() {
        q[(i, i)] += a;
    }
    let h = x.tr_mul(v);
    mvn_draw(&q, &h, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobitLink {
    pub beta: DVector<f64>,
    pub alpha: DVector<f64>,
    pub dof: f64,
    pub lambda: DVector<f64>,
    pub utility: DVector<f64>,
    pub prior: ArdPrior,
}

impl RobitLink {
    pub fn new<R: Rng + ?Sized>(n: usize, d: usize, dof: f64, rng: &mut R) -> Self {
        let lambda = DVector::from_fn(n, |_, _| gamma(0.5 * dof, 2.0 / dof, rng));
        Self {
            beta: DVector::zeros(d),
            alpha: DVector::from_element(d, 1.0),
            dof,
            lambda,
            utility: DVector::zeros(n),
            prior: ArdPrior::default(),
        }
    }

    /// u | β, λ (sign fixed by b), then λ | u, β, then β | u, λ, then α.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        b: &[bool],
        x: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<(), SamplingError> {
        let eta = x * &self.beta;
        for i in 0..b.len() {
            let side = if b[i] { Side::Positive } else { Side::Negative };
            let sd = 1.0 / self.lambda[i].sqrt();
            self.utility[i] = truncated_normal(eta[i], sd, side, rng);
            let r = self.utility[i] - eta[i];
            self.lambda[i] = gamma(0.5 * (self.dof + 1.0), 2.0 / (self.dof + r * r), rng);
        }
        let v = self.utility.component_mul(&self.lambda);
        self.beta = gaussian_regression_draw(x, &self.lambda, &v, &self.alpha, rng)?;
        self.prior.update(&self.beta, &mut self.alpha, rng);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmLink {
    pub beta: DVector<f64>,
    pub included: Vec<bool>,
    pub omega: DVector<f64>,
    pub spec: SvmSpec,
}

impl SvmLink {
    pub fn new<R: Rng + ?Sized>(n: usize, d: usize, spec: SvmSpec, rng: &mut R) -> Self {
        let included = (0..d).map(|v| v == 0 || rng.random::<f64>() >= spec.spike_prob).collect();
        Self { beta: DVector::zeros(d), included, omega: DVector::from_element(n, 1.0), spec }
    }

    /// ω | β from the hinge mixture, then a single-site sweep over
    /// (inclusion, coefficient) pairs with the coefficient integrated out
    /// of the inclusion draw. Column 0 (intercept) is always included.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        b: &[bool],
        x: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<(), SamplingError> {
        let n = b.len();
        let sign: Vec<f64> = b.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
        let eta = x * &self.beta;
        for i in 0..n {
            let gap = (1.0 - sign[i] * eta[i]).abs().max(1e-10);
            let inv = inverse_gaussian(1.0 / gap, 1.0, rng);
            self.omega[i] = 1.0 / inv;
        }
        let w: Vec<f64> = self.omega.iter().map(|o| 1.0 / o).collect();
        // residual of the weighted least-squares target y(1 + ω)
        let mut resid: Vec<f64> = (0..n).map(|i| sign[i] * (1.0 + self.omega[i]) - eta[i]).collect();
        let slab_prec = 1.0 / self.spec.slab_variance;
        let prior_log_odds = ((1.0 - self.spec.spike_prob) / self.spec.spike_prob).ln();
        for v in 0..x.ncols() {
            let col = x.column(v);
            let old = self.beta[v];
            let mut a = slab_prec;
            let mut m = 0.0;
            for i in 0..n {
                let r = resid[i] + col[i] * old;
                a += w[i] * col[i] * col[i];
                m += w[i] * col[i] * r;
            }
            let include = if v == 0 {
                true
            } else {
                let log_odds = prior_log_odds + 0.5 * (slab_prec / a).ln() + 0.5 * m * m / a;
                rng.random::<f64>() < 1.0 / (1.0 + (-log_odds).exp())
            };
            let new = if include { m / a + std_normal(rng) / a.sqrt() } else { 0.0 };
            if !new.is_finite() {
                return Err(SamplingError::NotPositiveDefinite { dim: 1 });
            }
            self.included[v] = include;
            self.beta[v] = new;
            if new != old {
                for i in 0..n {
                    resid[i] += col[i] * (old - new);
                }
            }
        }
        Ok(())
    }
}

/// One category's stick classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum StickRegressor {
    Logistic(LogisticLink),
    Robit(RobitLink),
    Svm(SvmLink),
    Msr(MsrLinkState),
}

impl StickRegressor {
    pub fn new<R: Rng + ?Sized>(spec: &LinkSpec, n: usize, d: usize, rng: &mut R) -> Self {
        match spec {
            LinkSpec::Logistic => StickRegressor::Logistic(LogisticLink::new(n, d)),
            LinkSpec::Robit { dof } => StickRegressor::Robit(RobitLink::new(n, d, *dof, rng)),
            LinkSpec::Svm(s) => StickRegressor::Svm(SvmLink::new(n, d, s.clone(), rng)),
            LinkSpec::Msr(s) => StickRegressor::Msr(MsrLinkState::new(s, n, d, rng)),
        }
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        b: &[bool],
        x: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<(), SamplingError> {
        match self {
            StickRegressor::Logistic(l) => l.update(b, x, rng),
            StickRegressor::Robit(l) => l.update(b, x, rng),
            StickRegressor::Svm(l) => l.update(b, x, rng),
            StickRegressor::Msr(l) => l.update(b, x, rng),
        }
    }

    pub fn params(&self) -> LinkParams {
        match self {
            StickRegressor::Logistic(l) => LinkParams::Linear(l.beta.as_slice().to_vec()),
            StickRegressor::Robit(l) => LinkParams::Linear(l.beta.as_slice().to_vec()),
            StickRegressor::Svm(l) => LinkParams::Linear(l.beta.as_slice().to_vec()),
            StickRegressor::Msr(l) => LinkParams::Msr(l.params()),
        }
    }
}
