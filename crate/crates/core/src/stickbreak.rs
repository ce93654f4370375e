//! Permuted and augmented stick breaking: probability assembly, stick
//! variable sampling, the category-to-stick permutation move, generative
//! samplers, and the full Gibbs driver.
//!
//! Categories and sticks are zero-based; stick `S - 1` is the reference
//! stick whose success probability never enters the category probabilities.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::links::{clamp_prob, LinkParams, LinkSpec, StickRegressor};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Construction {
    /// A category is chosen at the first stick that succeeds.
    Pasb,
    /// Reverse: a category is chosen at the first stick that fails.
    Parsb,
}

impl Construction {
    pub fn name(self) -> &'static str {
        match self {
            Construction::Pasb => "pasb",
            Construction::Parsb => "parsb",
        }
    }
}

/// `stick_of(s)` is the stick assigned to category `s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoryStickMapping {
    z: Vec<usize>,
}

impl CategoryStickMapping {
    pub fn identity(n_categories: usize) -> Self {
        Self { z: (0..n_categories).collect() }
    }

    pub fn new(z: Vec<usize>) -> Result<Self, ModelError> {
        let mut seen = vec![false; z.len()];
        for &j in &z {
            if j >= z.len() || seen[j] {
                return Err(ModelError::InvalidConfig(format!("{z:?} is not a permutation")));
            }
            seen[j] = true;
        }
        Ok(Self { z })
    }

    /// Parse a comma-separated one-based permutation such as `2,1,3`.
    pub fn parse_one_based(text: &str) -> Result<Self, ModelError> {
        let z = text
            .split(',')
            .map(|t| match t.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(ModelError::InvalidConfig(format!("bad permutation entry {t:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(z).map_err(|_| ModelError::InvalidConfig(format!("{text:?} is not a permutation of 1..{}", text.split(',').count())))
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn stick_of(&self, category: usize) -> usize {
        self.z[category]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.z
    }

    /// `inverse()[j]` is the category on stick `j`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.z.len()];
        for (s, &j) in self.z.iter().enumerate() {
            inv[j] = s;
        }
        inv
    }

    pub fn swapped(&self, a: usize, b: usize) -> Self {
        let mut z = self.z.clone();
        z.swap(a, b);
        Self { z }
    }
}

/// Log probability of each category given stick success probabilities
/// indexed by stick.
pub fn assemble_log_probs(pi_by_stick: &[f64], z: &CategoryStickMapping, construction: Construction) -> Vec<f64> {
    let n = pi_by_stick.len();
    let prefix = stick_prefix(pi_by_stick, construction);
    (0..n)
        .map(|s| {
            let j = z.stick_of(s);
            prefix[j] + own_log_term(pi_by_stick[j], j, n, construction)
        })
        .collect()
}

// ln of Π_{j'<j} (failure term) for every stick j.
fn stick_prefix(pi_by_stick: &[f64], construction: Construction) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(pi_by_stick.len());
    let mut acc = 0.0;
    for &p in pi_by_stick {
        prefix.push(acc);
        let p = clamp_prob(p);
        acc += match construction {
            Construction::Pasb => (-p).ln_1p(),
            Construction::Parsb => p.ln(),
        };
    }
    prefix
}

fn own_log_term(p: f64, stick: usize, n_sticks: usize, construction: Construction) -> f64 {
    if stick + 1 == n_sticks {
        return 0.0;
    }
    let p = clamp_prob(p);
    match construction {
        Construction::Pasb => p.ln(),
        Construction::Parsb => (-p).ln_1p(),
    }
}

/// Category probabilities from stick success probabilities indexed by stick.
pub fn assemble_probs(pi_by_stick: &[f64], z: &CategoryStickMapping, construction: Construction) -> Vec<f64> {
    assemble_log_probs(pi_by_stick, z, construction).into_iter().map(f64::exp).collect()
}

/// Log probability of one category only.
pub fn log_prob_of(
    pi_by_category: &[f64],
    category: usize,
    z: &CategoryStickMapping,
    construction: Construction,
) -> f64 {
    let n = pi_by_category.len();
    let target = z.stick_of(category);
    let mut acc = own_log_term(pi_by_category[category], target, n, construction);
    for (s, &p) in pi_by_category.iter().enumerate() {
        if z.stick_of(s) < target {
            let p = clamp_prob(p);
            acc += match construction {
                Construction::Pasb => (-p).ln_1p(),
                Construction::Parsb => p.ln(),
            };
        }
    }
    acc
}

/// Reorder a category-indexed row of stick probabilities by stick.
pub fn by_stick(pi_by_category: &[f64], z: &CategoryStickMapping) -> Vec<f64> {
    let mut out = vec![0.0; pi_by_category.len()];
    for (s, &p) in pi_by_category.iter().enumerate() {
        out[z.stick_of(s)] = p;
    }
    out
}

/// Augmented binary stick outcomes, `by_stick[j][i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StickVariables {
    pub by_stick: Vec<Vec<bool>>,
}

/// Draw every stick outcome given labels. `pi` is N × S indexed by
/// category (column s is category s's link evaluated on the data).
pub fn sample_stick_variables<R: Rng + ?Sized>(
    y: &[usize],
    pi: &DMatrix<f64>,
    z: &CategoryStickMapping,
    construction: Construction,
    rng: &mut R,
) -> StickVariables {
    let n_sticks = z.len();
    let inv = z.inverse();
    let mut by_stick = vec![vec![false; y.len()]; n_sticks];
    let (before, at) = match construction {
        Construction::Pasb => (false, true),
        Construction::Parsb => (true, false),
    };
    for (i, &label) in y.iter().enumerate() {
        let chosen = z.stick_of(label);
        for (j, col) in by_stick.iter_mut().enumerate() {
            col[i] = if j + 1 == n_sticks {
                // reference stick
                if chosen == j {
                    at
                } else {
                    before
                }
            } else if j < chosen {
                before
            } else if j == chosen {
                at
            } else {
                rng.random::<f64>() < clamp_prob(pi[(i, inv[j])])
            };
        }
    }
    StickVariables { by_stick }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhOutcome {
    pub mapping: CategoryStickMapping,
    pub accepted: bool,
    pub log_ratio: f64,
}

/// Σ_i ln p_{i, y_i}(z) for category-indexed stick probabilities.
pub fn mapping_log_likelihood(
    pi: &DMatrix<f64>,
    y: &[usize],
    z: &CategoryStickMapping,
    construction: Construction,
) -> f64 {
    let mut row = vec![0.0; pi.ncols()];
    let mut total = 0.0;
    for (i, &label) in y.iter().enumerate() {
        for (s, v) in row.iter_mut().enumerate() {
            *v = pi[(i, s)];
        }
        total += log_prob_of(&row, label, z, construction);
    }
    total
}

/// Swap the sticks of a uniformly chosen pair of categories and accept with
/// the Metropolis-Hastings ratio of the full likelihood.
pub fn mh_permutation_step<R: Rng + ?Sized>(
    z: &CategoryStickMapping,
    pi: &DMatrix<f64>,
    y: &[usize],
    construction: Construction,
    rng: &mut R,
) -> MhOutcome {
    let s = z.len();
    if s < 2 {
        return MhOutcome { mapping: z.clone(), accepted: false, log_ratio: 0.0 };
    }
    let a = rng.random_range(0..s);
    let mut b = rng.random_range(0..s - 1);
    if b >= a {
        b += 1;
    }
    let proposal = z.swapped(a, b);
    let log_ratio = mapping_log_likelihood(pi, y, &proposal, construction)
        - mapping_log_likelihood(pi, y, z, construction);
    let u: f64 = rng.random();
    if log_ratio >= 0.0 || u.ln() < log_ratio {
        MhOutcome { mapping: proposal, accepted: true, log_ratio }
    } else {
        MhOutcome { mapping: z.clone(), accepted: false, log_ratio }
    }
}

/// Simulate a label by drawing every stick independently.
pub fn generative_draw<R: Rng + ?Sized>(
    pi_by_stick: &[f64],
    z: &CategoryStickMapping,
    construction: Construction,
    rng: &mut R,
) -> usize {
    let n = pi_by_stick.len();
    let inv = z.inverse();
    let fires = match construction {
        Construction::Pasb => true,
        Construction::Parsb => false,
    };
    let outcomes: Vec<bool> = pi_by_stick[..n - 1].iter().map(|&p| rng.random::<f64>() < p).collect();
    let stick = outcomes.iter().position(|&b| b == fires).unwrap_or(n - 1);
    inv[stick]
}

/// Sequential random-utility draw with identity mapping: category s is
/// chosen at the first s whose logistic noise exceeds `-w[s]`.
pub fn sequential_utility_draw<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    for (s, &ws) in w.iter().enumerate() {
        let u: f64 = rng.random();
        let eps = (u / (1.0 - u)).ln();
        if eps > -ws {
            return s;
        }
    }
    w.len()
}

/// Row-stochastic N × S matrix of category probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(pub DMatrix<f64>);

impl ProbabilityMatrix {
    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// Most probable category per row; ties go to the lowest category.
    pub fn argmax(&self) -> Vec<usize> {
        self.0
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (s, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = s;
                    }
                }
                best
            })
            .collect()
    }

    /// Equal-weight average of several matrices of the same shape.
    pub fn average(parts: &[&ProbabilityMatrix]) -> Self {
        assert!(!parts.is_empty());
        let mut acc = parts[0].0.clone();
        for p in &parts[1..] {
            acc += &p.0;
        }
        Self(acc / parts.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub permute_mapping: bool,
    pub construction: Construction,
    /// Permutation proposals per sweep.
    pub mh_proposals: usize,
    pub start_mapping: Option<CategoryStickMapping>,
}

impl McmcConfig {
    pub fn new(total_iterations: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            total_iterations,
            burn_in,
            thinning: 1,
            seed,
            permute_mapping: true,
            construction: Construction::Pasb,
            mh_proposals: 1,
            start_mapping: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.total_iterations == 0 {
            return Err(ModelError::InvalidConfig("total iterations must be positive".into()));
        }
        if self.burn_in >= self.total_iterations {
            return Err(ModelError::InvalidConfig("burn-in must be below total iterations".into()));
        }
        if self.thinning == 0 {
            return Err(ModelError::InvalidConfig("thinning must be positive".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.total_iterations - self.burn_in) / self.thinning
    }
}

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub sweep: usize,
    /// Indexed by category.
    pub params: Vec<LinkParams>,
    pub mapping: CategoryStickMapping,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStore {
    pub spec: LinkSpec,
    pub construction: Construction,
    pub n_categories: usize,
    pub dim: usize,
    pub samples: Vec<PosteriorSample>,
    /// Per sweep, including burn-in.
    pub log_likelihood: Vec<f64>,
    pub mapping_trace: Vec<CategoryStickMapping>,
    pub accepted: Vec<bool>,
}

impl TraceStore {
    /// Index of the retained sample with the highest training likelihood.
    pub fn best_sample(&self) -> Option<usize> {
        (0..self.samples.len()).max_by(|&a, &b| {
            self.samples[a].log_likelihood.total_cmp(&self.samples[b].log_likelihood).then(b.cmp(&a))
        })
    }

    pub fn only(&self, index: usize) -> Self {
        Self { samples: vec![self.samples[index].clone()], ..self.clone() }
    }
}

/// Sampler state for a full multinomial model.
#[derive(Debug, Clone)]
pub struct StickModel {
    pub spec: LinkSpec,
    pub construction: Construction,
    pub mapping: CategoryStickMapping,
    /// Indexed by category.
    pub regressors: Vec<StickRegressor>,
    /// N × S cache of each category's link evaluated on the training data.
    pub pi: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub log_likelihood: f64,
    pub accepted: bool,
}

impl StickModel {
    pub fn new(
        spec: &LinkSpec,
        x: &DMatrix<f64>,
        n_categories: usize,
        config: &McmcConfig,
        stream: &RngStream,
    ) -> Result<Self, ModelError> {
        let mapping = match &config.start_mapping {
            Some(z) if z.len() != n_categories => {
                return Err(ModelError::InvalidConfig(format!(
                    "start permutation has {} entries for {} categories",
                    z.len(),
                    n_categories
                )))
            }
            Some(z) => z.clone(),
            None => CategoryStickMapping::identity(n_categories),
        };
        let regressors = (0..n_categories)
            .map(|s| StickRegressor::new(spec, x.nrows(), x.ncols(), &mut stream.child(s as u64).rng()))
            .collect();
        let mut model = Self {
            spec: spec.clone(),
            construction: config.construction,
            mapping,
            regressors,
            pi: DMatrix::zeros(x.nrows(), n_categories),
        };
        model.refresh_pi(x);
        Ok(model)
    }

    pub fn n_categories(&self) -> usize {
        self.regressors.len()
    }

    pub fn refresh_pi(&mut self, x: &DMatrix<f64>) {
        let cols: Vec<Vec<f64>> = self.regressors.par_iter().map(|r| r.params().pi(&self.spec, x)).collect();
        for (s, col) in cols.into_iter().enumerate() {
            self.pi.set_column(s, &nalgebra::DVector::from_vec(col));
        }
    }

    pub fn log_likelihood(&self, y: &[usize]) -> f64 {
        mapping_log_likelihood(&self.pi, y, &self.mapping, self.construction)
    }

    pub fn params(&self) -> Vec<LinkParams> {
        self.regressors.iter().map(StickRegressor::params).collect()
    }

    /// One sweep: stick outcomes, independent per-category link updates,
    /// optional permutation proposals, and the resulting log-likelihood.
    /// `stream` must be unique to this sweep.
    pub fn gibbs_sweep(
        &mut self,
        x: &DMatrix<f64>,
        y: &[usize],
        config: &McmcConfig,
        stream: &RngStream,
    ) -> Result<SweepRecord, ModelError> {
        let n_cat = self.n_categories();
        if n_cat < 2 {
            return Ok(SweepRecord { log_likelihood: 0.0, accepted: false });
        }
        let mut master = stream.child(0).rng();
        let b = sample_stick_variables(y, &self.pi, &self.mapping, self.construction, &mut master);
        let mapping = self.mapping.clone();
        self.regressors
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(s, reg)| {
                let mut rng = stream.child(1 + s as u64).rng();
                reg.update(&b.by_stick[mapping.stick_of(s)], x, &mut rng)
                    .map_err(|source| ModelError::Numeric { category: s, source })
            })?;
        self.refresh_pi(x);
        let mut accepted = false;
        if config.permute_mapping {
            for _ in 0..config.mh_proposals {
                let out = mh_permutation_step(&self.mapping, &self.pi, y, self.construction, &mut master);
                accepted |= out.accepted;
                self.mapping = out.mapping;
            }
        }
        Ok(SweepRecord { log_likelihood: self.log_likelihood(y), accepted })
    }

    /// Category probabilities for new rows under the current state.
    pub fn predict(&self, x: &DMatrix<f64>) -> ProbabilityMatrix {
        let params = self.params();
        probabilities_for(&self.spec, &params, &self.mapping, self.construction, x)
    }
}

fn probabilities_for(
    spec: &LinkSpec,
    params: &[LinkParams],
    z: &CategoryStickMapping,
    construction: Construction,
    x: &DMatrix<f64>,
) -> ProbabilityMatrix {
    let n_cat = params.len();
    let n = x.nrows();
    if n_cat == 1 {
        return ProbabilityMatrix(DMatrix::from_element(n, 1, 1.0));
    }
    let cols: Vec<Vec<f64>> = params.iter().map(|p| p.pi(spec, x)).collect();
    let mut out = DMatrix::zeros(n, n_cat);
    let mut row = vec![0.0; n_cat];
    for i in 0..n {
        for (s, v) in row.iter_mut().enumerate() {
            *v = cols[s][i];
        }
        let probs = assemble_probs(&by_stick(&row, z), z, construction);
        for (s, p) in probs.into_iter().enumerate() {
            out[(i, s)] = p;
        }
    }
    ProbabilityMatrix(out)
}

/// Run the sampler and keep `floor((total - burn_in) / thinning)` draws.
pub fn run(
    spec: &LinkSpec,
    x: &DMatrix<f64>,
    y: &[usize],
    n_categories: usize,
    config: &McmcConfig,
) -> Result<TraceStore, ModelError> {
    run_with(spec, x, y, n_categories, config, |_, _, _| {})
}

/// [`run`] with a callback after every sweep (zero-based sweep index, state,
/// sweep record).
pub fn run_with<F: FnMut(usize, &StickModel, &SweepRecord)>(
    spec: &LinkSpec,
    x: &DMatrix<f64>,
    y: &[usize],
    n_categories: usize,
    config: &McmcConfig,
    mut on_sweep: F,
) -> Result<TraceStore, ModelError> {
    config.validate()?;
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch { expected: y.len(), found: x.nrows() });
    }
    let root = RngStream::new(config.seed);
    let mut model = StickModel::new(spec, x, n_categories, config, &root.child(0))?;
    let mut trace = TraceStore {
        spec: spec.clone(),
        construction: config.construction,
        n_categories,
        dim: x.ncols(),
        samples: Vec::with_capacity(config.retained()),
        log_likelihood: Vec::with_capacity(config.total_iterations),
        mapping_trace: Vec::with_capacity(config.total_iterations),
        accepted: Vec::with_capacity(config.total_iterations),
    };
    for t in 0..config.total_iterations {
        let rec = model.gibbs_sweep(x, y, config, &root.child(1 + t as u64))?;
        trace.log_likelihood.push(rec.log_likelihood);
        trace.mapping_trace.push(model.mapping.clone());
        trace.accepted.push(rec.accepted);
        let done = t + 1;
        if done > config.burn_in && (done - config.burn_in) % config.thinning == 0 {
            trace.samples.push(PosteriorSample {
                sweep: done,
                params: model.params(),
                mapping: model.mapping.clone(),
                log_likelihood: rec.log_likelihood,
            });
        }
        on_sweep(t, &model, &rec);
    }
    Ok(trace)
}

/// Category probabilities under each retained draw separately.
pub fn predict_each(trace: &TraceStore, x: &DMatrix<f64>) -> Result<Vec<ProbabilityMatrix>, ModelError> {
    if x.ncols() != trace.dim {
        return Err(ModelError::DimensionMismatch { expected: trace.dim, found: x.ncols() });
    }
    Ok(trace
        .samples
        .par_iter()
        .map(|s| probabilities_for(&trace.spec, &s.params, &s.mapping, trace.construction, x))
        .collect())
}

/// Monte Carlo average of the category probabilities over retained draws.
pub fn predict(trace: &TraceStore, x: &DMatrix<f64>) -> Result<ProbabilityMatrix, ModelError> {
    if trace.samples.is_empty() {
        return Err(ModelError::NoSamples);
    }
    if x.ncols() != trace.dim {
        return Err(ModelError::DimensionMismatch { expected: trace.dim, found: x.ncols() });
    }
    const BLOCK: usize = 64;
    let mut acc = DMatrix::zeros(x.nrows(), trace.n_categories);
    for block in trace.samples.chunks(BLOCK) {
        let parts: Vec<ProbabilityMatrix> = block
            .par_iter()
            .map(|s| probabilities_for(&trace.spec, &s.params, &s.mapping, trace.construction, x))
            .collect();
        for p in parts {
            acc += p.0;
        }
    }
    Ok(ProbabilityMatrix(acc / trace.samples.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn assemble_examples() {
        let id = CategoryStickMapping::identity(3);
        let p = assemble_probs(&[0.2, 0.5, 0.9], &id, Construction::Pasb);
        assert!(close(&p, &[0.2, 0.4, 0.4], 1e-15));
        // z = (2,1,3): category 1 sits on stick 2
        let z = CategoryStickMapping::parse_one_based("2,1,3").unwrap();
        let p = assemble_probs(&[0.5, 0.25, 0.3], &z, Construction::Pasb);
        assert!(close(&p, &[0.125, 0.5, 0.375], 1e-15));
        let p = assemble_probs(&[0.5, 0.5, 0.1], &id, Construction::Parsb);
        assert!(close(&p, &[0.5, 0.25, 0.25], 1e-15));
    }

    #[test]
    fn mapping_validation() {
        assert!(CategoryStickMapping::new(vec![0, 0, 1]).is_err());
        assert!(CategoryStickMapping::parse_one_based("1,3").is_err());
        assert!(CategoryStickMapping::parse_one_based("0,1").is_err());
        let z = CategoryStickMapping::parse_one_based("3,1,2").unwrap();
        assert_eq!(z.inverse(), vec![1, 2, 0]);
    }

    #[test]
    fn forced_stick_rows() {
        let mut rng = RngStream::new(1).rng();
        let id = CategoryStickMapping::identity(3);
        let pi = DMatrix::from_row_slice(1, 3, &[0.3, 1.0 - 1e-12, 0.4]);
        let b = sample_stick_variables(&[2], &pi, &id, Construction::Pasb, &mut rng);
        assert_eq!((b.by_stick[0][0], b.by_stick[1][0], b.by_stick[2][0]), (false, false, true));
        let b = sample_stick_variables(&[0], &pi, &id, Construction::Pasb, &mut rng);
        assert_eq!((b.by_stick[0][0], b.by_stick[1][0], b.by_stick[2][0]), (true, true, false));
        let b = sample_stick_variables(&[0], &pi, &id, Construction::Parsb, &mut rng);
        assert!(!b.by_stick[0][0]);
        assert!(b.by_stick[2][0]);
    }

    #[test]
    fn mh_ratio_example() {
        // N = 1, y = category 1, π = (0.5, 0.5, ·): swapping the first two
        // categories has ratio π₂(1 - π₁)/π₁ = 0.5
        let pi = DMatrix::from_row_slice(1, 3, &[0.5, 0.5, 0.7]);
        let z = CategoryStickMapping::identity(3);
        let zp = z.swapped(0, 1);
        let ratio = (mapping_log_likelihood(&pi, &[0], &zp, Construction::Pasb)
            - mapping_log_likelihood(&pi, &[0], &z, Construction::Pasb))
        .exp();
        assert!((ratio - 0.5).abs() < 1e-15);
    }

    #[test]
    fn generative_limits() {
        let mut rng = RngStream::new(2).rng();
        let z = CategoryStickMapping::parse_one_based("3,1,2").unwrap();
        for _ in 0..100 {
            assert_eq!(generative_draw(&[0.0, 0.0, 0.5], &z, Construction::Pasb, &mut rng), 0);
            assert_eq!(generative_draw(&[1.0, 0.3, 0.5], &z, Construction::Pasb, &mut rng), 1);
            assert_eq!(sequential_utility_draw(&[1e300, 0.0], &mut rng), 0);
        }
    }

    #[test]
    fn single_category_is_degenerate() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let mut cfg = McmcConfig::new(3, 1, 1);
        cfg.permute_mapping = true;
        let trace = run(&LinkSpec::Logistic, &x, &[0; 5], 1, &cfg).unwrap();
        assert!(trace.log_likelihood.iter().all(|&l| l == 0.0));
        let p = predict(&trace, &x).unwrap();
        assert!(p.0.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn retained_count_and_fixed_mapping() {
        let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 6.0 - 1.0 });
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let mut cfg = McmcConfig::new(23, 5, 4);
        cfg.thinning = 4;
        cfg.permute_mapping = false;
        cfg.start_mapping = Some(CategoryStickMapping::parse_one_based("2,3,1").unwrap());
        let trace = run(&LinkSpec::Logistic, &x, &y, 3, &cfg).unwrap();
        assert_eq!(trace.samples.len(), (23 - 5) / 4);
        assert!(trace.mapping_trace.iter().all(|z| z == cfg.start_mapping.as_ref().unwrap()));
        assert!(trace.log_likelihood.iter().all(|l| l.is_finite()));
        let p = predict(&trace, &x).unwrap();
        for row in p.0.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_ties_take_lowest() {
        let p = ProbabilityMatrix(DMatrix::from_row_slice(2, 3, &[0.4, 0.4, 0.2, 0.2, 0.4, 0.4]));
        assert_eq!(p.argmax(), vec![0, 1]);
    }
}
