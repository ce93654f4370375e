//! Multinomial softplus regression links: stacked softplus hyperplanes
//! weighted by a truncated gamma process, sampled through stacked gamma /
//! negative-binomial count augmentation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::links::{clamp_prob, gaussian_regression_draw, ArdPrior};
use crate::sampling::{crt, gamma, polya_gamma_with, truncated_poisson_positive, PgMode, SamplingError};

const THETA_FLOOR: f64 = 1e-300;
// Hyperplanes on adjacent layers can drift in opposite directions without
// changing the rate; upper-layer θ would then overflow.
const THETA_CEIL: f64 = 1e10;

/// ln(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(softplus(x)), finite for very negative x.
fn ln_softplus(x: f64) -> f64 {
    if x < -700.0 {
        x
    } else {
        softplus(x).ln()
    }
}

/// ς(x₁, …, x_t) = ln(1 + e^{x_t} ln(1 + e^{x_{t-1}} ln(… ln(1 + e^{x₁})))).
///
/// Evaluated as a recursion on the log of the running value so each layer is
/// a single softplus of a sum.
pub fn stack_softplus(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "stack-softplus needs at least one argument");
    ln_stack_softplus(xs).exp()
}

pub fn ln_stack_softplus(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |lnq, &x| ln_softplus(x + lnq))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsrSpec {
    /// Gamma-process truncation K.
    pub experts: usize,
    /// Hyperplanes per expert T.
    pub layers: usize,
    pub gamma0: f64,
    pub c0: f64,
    /// When false, expert weights stay at their initial values.
    pub sample_weights: bool,
    pub pg_mode: PgMode,
    /// Hyperplane coefficient prior. Gamma(1, 1) precisions rather than the
    /// vague linear-link default: with stacked layers a near-flat hyperprior
    /// lets weakly identified hyperplanes drift off to infinity.
    pub prior: ArdPrior,
}

impl MsrSpec {
    pub fn new(experts: usize, layers: usize) -> Self {
        Self {
            experts,
            layers,
            gamma0: 1.0,
            c0: 1.0,
            sample_weights: true,
            pg_mode: PgMode::Standard,
            prior: ArdPrior { shape: 1.0, rate: 1.0 },
        }
    }
}

/// Snapshot of one category's MSR link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsrParams {
    pub layers: usize,
    pub r: Vec<f64>,
    /// `betas[k * layers + t]` is expert k's hyperplane at depth t
    /// (t = 0 is applied first, innermost).
    pub betas: Vec<Vec<f64>>,
    /// Experts holding at least one first-layer count at snapshot time.
    pub active: Vec<bool>,
}

impl MsrParams {
    pub fn experts(&self) -> usize {
        self.r.len()
    }

    pub fn dim(&self) -> usize {
        self.betas.first().map_or(0, Vec::len)
    }

    pub fn hyperplane(&self, k: usize, t: usize) -> &[f64] {
        &self.betas[k * self.layers + t]
    }

    /// λ(x) = Σ_k r_k ς(x·β_k¹, …, x·β_k^T).
    pub fn rate(&self, x: &DVector<f64>) -> f64 {
        let mut lambda = 0.0;
        let mut etas = vec![0.0; self.layers];
        for k in 0..self.experts() {
            for (t, e) in etas.iter_mut().enumerate() {
                *e = dot(self.hyperplane(k, t), x.as_slice());
            }
            lambda += self.r[k] * stack_softplus(&etas);
        }
        lambda
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stick probability 1 - e^{-λ(x)}, clamped.
pub fn msr_pi_from_params(params: &MsrParams, x: &DVector<f64>) -> f64 {
    clamp_prob(-(-params.rate(x)).exp_m1())
}

/// Sampler state for one category's MSR link.
#[derive(Debug, Clone, PartialEq)]
pub struct MsrLinkState {
    pub spec: MsrSpec,
    pub r: Vec<f64>,
    /// Indexed like [`MsrParams::betas`].
    pub betas: Vec<DVector<f64>>,
    pub alphas: Vec<DVector<f64>>,
    /// `theta[k * T + l][i]` is the gamma rate at layer l + 1 (l = 0 feeds
    /// the Poisson counts).
    pub theta: Vec<Vec<f64>>,
    /// `counts[k * T + l][i]`: latent counts at layer l + 1.
    pub counts: Vec<Vec<u64>>,
    /// Table counts above the top layer, `top_counts[k][i]`.
    pub top_counts: Vec<Vec<u64>>,
}

impl MsrLinkState {
    pub fn new<R: Rng + ?Sized>(spec: &MsrSpec, n: usize, d: usize, rng: &mut R) -> Self {
        let (k_max, t_max) = (spec.experts, spec.layers);
        assert!(k_max >= 1 && t_max >= 1, "MSR needs K, T >= 1");
        let r = vec![1.0 / k_max as f64; k_max];
        let mut theta = vec![vec![0.0; n]; k_max * t_max];
        // prior draw with all hyperplanes at zero (unit gamma scales)
        for k in 0..k_max {
            for i in 0..n {
                let mut shape = r[k];
                for l in (0..t_max).rev() {
                    let v = gamma(shape, 1.0, rng).max(THETA_FLOOR);
                    theta[k * t_max + l][i] = v;
                    shape = v;
                }
            }
        }
        Self {
            spec: spec.clone(),
            r,
            betas: vec![DVector::zeros(d); k_max * t_max],
            alphas: vec![DVector::from_element(d, 1.0); k_max * t_max],
            theta,
            counts: vec![vec![0; n]; k_max * t_max],
            top_counts: vec![vec![0; n]; k_max],
        }
    }

    pub fn params(&self) -> MsrParams {
        MsrParams {
            layers: self.spec.layers,
            r: self.r.clone(),
            betas: self.betas.iter().map(|b| b.as_slice().to_vec()).collect(),
            active: (0..self.spec.experts).map(|k| self.expert_active(k)).collect(),
        }
    }

    fn expert_active(&self, k: usize) -> bool {
        self.counts[k * self.spec.layers].iter().any(|&m| m > 0)
    }

    /// Number of experts holding any first-layer count.
    pub fn active_experts(&self) -> usize {
        (0..self.spec.experts).filter(|&k| self.expert_active(k)).count()
    }

    /// λ for every row of `x` under the current parameters.
    pub fn rates(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let p = self.params();
        (0..x.nrows()).map(|i| p.rate(&x.row(i).transpose())).collect()
    }

    /// One partially collapsed Gibbs sweep.
    ///
    /// Order: first-layer counts given b and θ¹; thinning across experts;
    /// table counts upward; hyperplanes bottom-up with the layers below
    /// integrated out (negative-binomial likelihood, Pólya-Gamma augmented);
    /// expert weights; θ downward; coefficient precisions.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        b: &[bool],
        x: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<(), SamplingError> {
        let n = b.len();
        let (k_max, t_max) = (self.spec.experts, self.spec.layers);

        // counts at layer 1
        let mut weights = vec![0.0; k_max];
        for i in 0..n {
            for k in 0..k_max {
                self.counts[k * t_max][i] = 0;
            }
            if !b[i] {
                continue;
            }
            for (k, w) in weights.iter_mut().enumerate() {
                *w = self.theta[k * t_max][i];
            }
            let total: f64 = weights.iter().sum();
            let m = truncated_poisson_positive(total, rng);
            // multinomial thinning via sequential binomials
            let mut left = m;
            let mut mass = total;
            for k in 0..k_max {
                if left == 0 {
                    break;
                }
                let take = if k + 1 == k_max || mass <= 0.0 {
                    left
                } else {
                    let p = (weights[k] / mass).clamp(0.0, 1.0);
                    Binomial::new(left, p).expect("valid binomial").sample(rng)
                };
                self.counts[k * t_max][i] = take;
                left -= take;
                mass -= weights[k];
            }
        }

        // table counts upward
        for k in 0..k_max {
            for l in 1..t_max {
                for i in 0..n {
                    let below = self.counts[k * t_max + l - 1][i];
                    self.counts[k * t_max + l][i] = crt(below, self.theta[k * t_max + l][i], rng);
                }
            }
            for i in 0..n {
                self.top_counts[k][i] = crt(self.counts[k * t_max + t_max - 1][i], self.r[k], rng);
            }
        }

        // hyperplanes bottom-up; ln_q[i] tracks ln q_l for the current layer
        let mut top_ln_q = vec![vec![0.0; n]; k_max];
        for k in 0..k_max {
            let mut ln_q = vec![0.0; n];
            for l in 0..t_max {
                let idx = k * t_max + l;
                let psi = x * &self.betas[idx];
                let mut omega = DVector::zeros(n);
                let mut v = DVector::zeros(n);
                for i in 0..n {
                    let shape = if l + 1 < t_max { self.theta[idx + 1][i] } else { self.r[k] };
                    let m = self.counts[idx][i] as f64;
                    let w = polya_gamma_with(m + shape, psi[i] + ln_q[i], self.spec.pg_mode, rng);
                    omega[i] = w;
                    v[i] = 0.5 * (m - shape) - w * ln_q[i];
                }
                self.betas[idx] = gaussian_regression_draw(x, &omega, &v, &self.alphas[idx], rng)?;
                let psi = x * &self.betas[idx];
                for i in 0..n {
                    ln_q[i] = ln_softplus(psi[i] + ln_q[i]);
                }
            }
            top_ln_q[k] = ln_q;
        }

        if self.spec.sample_weights {
            for k in 0..k_max {
                let tables: u64 = self.top_counts[k].iter().sum();
                let exposure: f64 = top_ln_q[k].iter().map(|l| l.exp()).sum();
                let shape = self.spec.gamma0 / k_max as f64 + tables as f64;
                self.r[k] = gamma(shape, 1.0 / (self.spec.c0 + exposure), rng);
            }
        }

        // θ downward: θ^l ~ Gamma(θ^{l+1} + m^l, scale e^ψ / (1 + e^ψ q_l))
        for k in 0..k_max {
            let mut ln_q_layers = vec![vec![0.0; n]; t_max];
            let mut psis = Vec::with_capacity(t_max);
            for l in 0..t_max {
                let psi = x * &self.betas[k * t_max + l];
                if l + 1 < t_max {
                    for i in 0..n {
                        ln_q_layers[l + 1][i] = ln_softplus(psi[i] + ln_q_layers[l][i]);
                    }
                }
                psis.push(psi);
            }
            for l in (0..t_max).rev() {
                let idx = k * t_max + l;
                for i in 0..n {
                    let above = if l + 1 < t_max { self.theta[idx + 1][i] } else { self.r[k] };
                    let shape = above + self.counts[idx][i] as f64;
                    let ln_scale = psis[l][i] - softplus(psis[l][i] + ln_q_layers[l][i]);
                    let g = gamma(shape, 1.0, rng);
                    self.theta[idx][i] = (g * ln_scale.exp()).clamp(THETA_FLOOR, THETA_CEIL);
                }
            }
        }

        for (beta, alpha) in self.betas.iter().zip(self.alphas.iter_mut()) {
            self.spec.prior.update(beta, alpha, rng);
        }
        Ok(())
    }
}

/// Active-expert hyperplanes of a trained MSR, used to augment covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub hyperplanes: Vec<Vec<f64>>,
    /// Identifies the model the hyperplanes came from.
    pub fingerprint: String,
}

impl TransformRecord {
    /// Collect the hyperplanes of every active expert of every category.
    pub fn from_params<'a>(params: impl IntoIterator<Item = &'a MsrParams>, fingerprint: String) -> Self {
        let mut hyperplanes = Vec::new();
        for p in params {
            for k in 0..p.experts() {
                if p.active[k] {
                    for t in 0..p.layers {
                        hyperplanes.push(p.hyperplane(k, t).to_vec());
                    }
                }
            }
        }
        Self { hyperplanes, fingerprint }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.hyperplanes.first().map(Vec::len)
    }
}

/// [x, ln(1 + e^{x·β̃}) for every stored hyperplane β̃].
pub fn transform_covariates(x: &[f64], record: &TransformRecord) -> Result<Vec<f64>, crate::error::DataError> {
    if let Some(d) = record.input_dim() {
        if d != x.len() {
            return Err(crate::error::DataError::DimensionMismatch { expected: d, found: x.len() });
        }
    }
    let mut out = x.to_vec();
    out.extend(record.hyperplanes.iter().map(|h| softplus(dot(h, x))));
    Ok(out)
}

/// Row-wise [`transform_covariates`] on a design matrix.
pub fn transform_design(x: &DMatrix<f64>, record: &TransformRecord) -> Result<DMatrix<f64>, crate::error::DataError> {
    let rows = (0..x.nrows())
        .map(|i| transform_covariates(x.row(i).transpose().as_slice(), record))
        .collect::<Result<Vec<_>, _>>()?;
    let d = x.ncols() + record.hyperplanes.len();
    Ok(DMatrix::from_fn(x.nrows(), d, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_softplus_closed_forms() {
        assert!((stack_softplus(&[0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((stack_softplus(&[0.0, 0.0]) - (1.0 + 2f64.ln()).ln()).abs() < 1e-15);
        assert!((stack_softplus(&[0.0, 0.0]) - 0.526_589).abs() < 1e-6);
        assert!(stack_softplus(&[50.0]) - 50.0 < 1e-12);
        assert!(stack_softplus(&[700.0, -700.0, 700.0]).is_finite());
        assert!(stack_softplus(&[-700.0, -700.0]) >= 0.0);
    }

    #[test]
    fn msr_pi_closed_forms() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let one = MsrParams { layers: 1, r: vec![1.0], betas: vec![vec![0.0, 3.0]], active: vec![true] };
        assert!((msr_pi_from_params(&one, &x) - 0.5).abs() < 1e-15);
        let two = MsrParams {
            layers: 1,
            r: vec![1.0, 1.0],
            betas: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            active: vec![true, true],
        };
        assert!((msr_pi_from_params(&two, &x) - 0.75).abs() < 1e-15);
        let none = MsrParams { r: vec![0.0, 0.0], ..two };
        assert_eq!(msr_pi_from_params(&none, &x), crate::links::PI_EPS);
    }

    #[test]
    fn transform_appends_softplus() {
        let rec = TransformRecord { hyperplanes: vec![vec![0.0, 0.0]], fingerprint: String::new() };
        let out = transform_covariates(&[1.0, 2.0], &rec).unwrap();
        assert_eq!(out.len(), 3);
        assert!((out[2] - 2f64.ln()).abs() < 1e-15);
        let empty = TransformRecord { hyperplanes: vec![], fingerprint: String::new() };
        assert_eq!(transform_covariates(&[1.0, 2.0], &empty).unwrap(), vec![1.0, 2.0]);
        assert!(transform_covariates(&[1.0], &rec).is_err());
    }

    #[test]
    fn counts_follow_stick_outcomes() {
        use crate::rng::RngStream;
        let mut rng = RngStream::new(5).rng();
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 10.0 - 1.0 });
        let b: Vec<bool> = (0..20).map(|i| i >= 8).collect();
        let mut st = MsrLinkState::new(&MsrSpec::new(3, 2), 20, 2, &mut rng);
        for _ in 0..30 {
            st.update(&b, &x, &mut rng).unwrap();
            for i in 0..20 {
                let total: u64 = (0..3).map(|k| st.counts[k * 2][i]).sum();
                assert_eq!(total >= 1, b[i]);
            }
            assert!(st.theta.iter().flatten().all(|&t| t > 0.0));
            assert!(st.active_experts() <= 3);
        }
    }

    #[test]
    fn all_failures_leave_no_counts() {
        use crate::rng::RngStream;
        let mut rng = RngStream::new(6).rng();
        let x = DMatrix::from_element(10, 1, 1.0);
        let mut st = MsrLinkState::new(&MsrSpec::new(2, 2), 10, 1, &mut rng);
        st.update(&[false; 10], &x, &mut rng).unwrap();
        assert_eq!(st.active_experts(), 0);
        assert!(st.counts.iter().flatten().all(|&m| m == 0));
        assert!(st.top_counts.iter().flatten().all(|&m| m == 0));
    }
}
