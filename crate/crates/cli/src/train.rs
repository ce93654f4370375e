//! Fitting and prediction on top of a feature pipeline.

use std::path::Path;

use nalgebra::DMatrix;
use pasb_core::data::{load_dataset, Dataset, Format, KernelWidth, LabelMap, LoadOptions};
use pasb_core::diagnostics::{error_rate, log_likelihood};
use pasb_core::links::{LinkParams, LinkSpec};
use pasb_core::rng::RngStream;
use pasb_core::stickbreak::{predict, run_with, McmcConfig, ProbabilityMatrix, StickModel, SweepRecord, TraceStore};
use rand::seq::SliceRandom;

use crate::error::CliError;
use crate::model_file::ModelFile;
use crate::pipeline::{FeaturePipeline, TransformStage};

#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    None,
    Fixed(KernelWidth),
    /// k-fold cross-validation over a width grid.
    CrossValidate { grid: Vec<KernelWidth>, folds: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub link: LinkSpec,
    pub mcmc: McmcConfig,
    pub standardize: bool,
    pub kernel: KernelChoice,
    pub transform: Option<TransformStage>,
}

impl TrainOptions {
    pub fn new(link: LinkSpec, mcmc: McmcConfig) -> Self {
        Self { link, mcmc, standardize: false, kernel: KernelChoice::None, transform: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// Average over every retained sample.
    Average,
    /// Only the retained sample with the highest training likelihood.
    BestSample,
}

/// Load a dataset with raw covariates (no intercept column).
pub fn load_raw(path: &Path, labels: Option<LabelMap>, n_covariates: Option<usize>) -> Result<Dataset, CliError> {
    let mut opts = LoadOptions::new(Format::from_path(path));
    opts.add_intercept = false;
    opts.label_map = labels;
    opts.n_covariates = n_covariates;
    Ok(load_dataset(path, &opts)?)
}

/// Fit on a dataset holding raw covariates.
pub fn fit(train: &Dataset, opts: &TrainOptions) -> Result<ModelFile, CliError> {
    fit_with(train, opts, |_, _, _| {})
}

/// [`fit`] with a per-sweep callback (see [`run_with`]).
pub fn fit_with<F: FnMut(usize, &StickModel, &SweepRecord)>(
    train: &Dataset,
    opts: &TrainOptions,
    on_sweep: F,
) -> Result<ModelFile, CliError> {
    let raw = train.covariates();
    let width = match &opts.kernel {
        KernelChoice::None => None,
        KernelChoice::Fixed(w) => Some(*w),
        KernelChoice::CrossValidate { grid, folds } => Some(select_kernel_width(train, opts, grid, *folds)?.0),
    };
    let pipeline = FeaturePipeline::fit(&raw, opts.standardize, width, opts.transform.clone())?;
    let x = pipeline.design(&raw)?;
    let trace = run_with(&opts.link, &x, &train.y, train.n_categories, &opts.mcmc, on_sweep)?;
    Ok(ModelFile { pipeline, labels: train.labels.labels().to_vec(), mcmc: opts.mcmc.clone(), trace })
}

pub fn predict_probabilities(model: &ModelFile, raw: &DMatrix<f64>, mode: PredictMode) -> Result<ProbabilityMatrix, CliError> {
    let x = model.pipeline.design(raw)?;
    let probs = match mode {
        PredictMode::Average => predict(&model.trace, &x)?,
        PredictMode::BestSample => {
            let best = model.trace.best_sample().ok_or(pasb_core::ModelError::NoSamples)?;
            predict(&model.trace.only(best), &x)?
        }
    };
    Ok(probs)
}

/// Mean over retained samples of T × (active experts summed over
/// categories); `None` for linear links.
pub fn active_hyperplanes(trace: &TraceStore) -> Option<f64> {
    if !matches!(trace.spec, LinkSpec::Msr(_)) || trace.samples.is_empty() {
        return None;
    }
    let total: f64 = trace
        .samples
        .iter()
        .map(|s| {
            s.params
                .iter()
                .map(|p| match p {
                    LinkParams::Msr(m) => (m.layers * m.active.iter().filter(|&&a| a).count()) as f64,
                    LinkParams::Linear(_) => 0.0,
                })
                .sum::<f64>()
        })
        .sum();
    Some(total / trace.samples.len() as f64)
}

/// Pick the kernel width with the lowest cross-validated error (ties go to
/// the higher held-out log-likelihood). Returns the width and its error.
pub fn select_kernel_width(
    train: &Dataset,
    opts: &TrainOptions,
    grid: &[KernelWidth],
    folds: usize,
) -> Result<(KernelWidth, f64), CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("kernel width grid is empty".into()));
    }
    let folds = folds.clamp(2, train.len().max(2));
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut RngStream::new(opts.mcmc.seed).child(u64::MAX).rng());
    let assignments: Vec<Vec<usize>> =
        (0..folds).map(|f| order.iter().copied().skip(f).step_by(folds).collect()).collect();
    let raw = train.covariates();
    let mut best: Option<(KernelWidth, f64, f64)> = None;
    for &w in grid {
        let mut wrong = 0.0;
        let mut ll = 0.0;
        for held in &assignments {
            let mut fit_rows: Vec<usize> = (0..train.len()).filter(|i| !held.contains(i)).collect();
            fit_rows.sort_unstable();
            let part = train.subset(&fit_rows);
            let fold_opts = TrainOptions { kernel: KernelChoice::Fixed(w), ..opts.clone() };
            let model = fit(&part, &fold_opts)?;
            let held_raw = DMatrix::from_fn(held.len(), raw.ncols(), |i, j| raw[(held[i], j)]);
            let held_y: Vec<usize> = held.iter().map(|&i| train.y[i]).collect();
            let probs = predict_probabilities(&model, &held_raw, PredictMode::Average)?;
            wrong += error_rate(&probs, &held_y)? * held.len() as f64 / 100.0;
            ll += log_likelihood(&probs, &held_y);
        }
        let err = 100.0 * wrong / train.len() as f64;
        let better = match best {
            None => true,
            Some((_, e, l)) => err < e || (err == e && ll > l),
        };
        if better {
            best = Some((w, err, ll));
        }
    }
    let (w, e, _) = best.expect("non-empty grid");
    Ok((w, e))
}
