//! Fit and mixing diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::stickbreak::ProbabilityMatrix;

/// Σ_i ln p_{i, y_i}.
pub fn log_likelihood(probs: &ProbabilityMatrix, y: &[usize]) -> f64 {
    y.iter().enumerate().map(|(i, &c)| probs.0[(i, c)].max(f64::MIN_POSITIVE).ln()).sum()
}

/// Percentage of rows whose most probable category differs from `y`.
pub fn error_rate(probs: &ProbabilityMatrix, y: &[usize]) -> Result<f64, DataError> {
    if probs.nrows() != y.len() {
        return Err(DataError::DimensionMismatch { expected: probs.nrows(), found: y.len() });
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let wrong = probs.argmax().iter().zip(y).filter(|(a, b)| a != b).count();
    Ok(100.0 * wrong as f64 / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub value: f64,
    /// The chain was constant; `value` is then its length.
    pub degenerate: bool,
}

fn mean_var(chain: &[f64]) -> (f64, f64) {
    let n = chain.len() as f64;
    let m = chain.iter().sum::<f64>() / n;
    let v = chain.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v)
}

/// L / (1 + 2 Σ ρ(h)) with the autocorrelation sum truncated by Geyer's
/// initial positive sequence rule (pairs summed while positive, forced
/// monotone). Capped at L.
pub fn ess(chain: &[f64]) -> EssEstimate {
    let len = chain.len();
    let l = len as f64;
    let (m, v) = mean_var(chain);
    if len < 2 || !(v > 1e-300 * m.abs().max(1.0)) {
        return EssEstimate { value: l, degenerate: true };
    }
    let centered: Vec<f64> = chain.iter().map(|x| x - m).collect();
    let rho = |h: usize| -> f64 {
        let s: f64 = centered[..len - h].iter().zip(&centered[h..]).map(|(a, b)| a * b).sum();
        s / (l * v)
    };
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < len {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(2 * k) + rho(2 * k + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        k += 1;
    }
    EssEstimate { value: (l / tau.max(1e-12)).min(l), degenerate: false }
}

/// Batch-means ESS with ⌊√L⌋ batches, used to cross-check [`ess`].
pub fn ess_batch_means(chain: &[f64]) -> EssEstimate {
    let len = chain.len();
    let (_, v) = mean_var(chain);
    if len < 4 || v <= 0.0 {
        return EssEstimate { value: len as f64, degenerate: true };
    }
    let batches = (len as f64).sqrt().floor() as usize;
    let size = len / batches;
    let means: Vec<f64> =
        (0..batches).map(|b| chain[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let (_, vb) = mean_var(&means);
    let sigma2 = size as f64 * vb * batches as f64 / (batches as f64 - 1.0);
    EssEstimate { value: len as f64 * v / sigma2.max(1e-300), degenerate: false }
}

/// ESS over many monitored quantities, summarized by quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub values: Vec<f64>,
    pub degenerate: usize,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

impl EssReport {
    pub fn from_chains<'a>(chains: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let est: Vec<EssEstimate> = chains.into_iter().map(ess).collect();
        let degenerate = est.iter().filter(|e| e.degenerate).count();
        let values: Vec<f64> = est.iter().map(|e| e.value).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            q10: quantile(&sorted, 0.1),
            median: quantile(&sorted, 0.5),
            q90: quantile(&sorted, 0.9),
            values,
            degenerate,
        }
    }

    pub fn csv_header() -> &'static str {
        "quantities,degenerate,q10,median,q90"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.values.len(), self.degenerate, self.q10, self.median, self.q90)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
