//! Heatmap grids and ESS reports for trained models.

use nalgebra::DMatrix;
use pasb_core::diagnostics::EssReport;
use pasb_core::stickbreak::predict_each;

use crate::error::CliError;
use crate::model_file::ModelFile;
use crate::train::{predict_probabilities, PredictMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Parse `xmin,xmax,ymin,ymax`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let v: Vec<f64> = text
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("bounding box {text:?} is not four numbers")))?;
        if v.len() != 4 || !(v[0] <= v[1] && v[2] <= v[3]) {
            return Err(CliError::Usage(format!("bounding box {text:?} must be xmin,xmax,ymin,ymax")));
        }
        Ok(Self { x_min: v[0], x_max: v[1], y_min: v[2], y_max: v[3] })
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Predictive probability of every category on a resolution × resolution
/// grid; one CSV (`x,y,probability`) per category, in category order.
pub fn heatmap(model: &ModelFile, bbox: BoundingBox, resolution: usize) -> Result<Vec<String>, CliError> {
    if resolution == 0 {
        return Err(CliError::Usage("grid resolution must be positive".into()));
    }
    let xs = axis(bbox.x_min, bbox.x_max, resolution);
    let ys = axis(bbox.y_min, bbox.y_max, resolution);
    let points: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let raw = DMatrix::from_fn(points.len(), 2, |i, j| if j == 0 { points[i].0 } else { points[i].1 });
    let probs = predict_probabilities(model, &raw, PredictMode::Average)?;
    Ok((0..probs.ncols())
        .map(|s| {
            let mut out = String::from("x,y,probability\n");
            for (i, (x, y)) in points.iter().enumerate() {
                out.push_str(&format!("{x},{y},{}\n", probs.0[(i, s)]));
            }
            out
        })
        .collect())
}

/// ESS of every conditional class probability p_ij over the retained samples.
pub fn ess_report(model: &ModelFile, raw: &DMatrix<f64>) -> Result<EssReport, CliError> {
    let x = model.pipeline.design(raw)?;
    let per_sample = predict_each(&model.trace, &x)?;
    if per_sample.is_empty() {
        return Err(pasb_core::ModelError::NoSamples.into());
    }
    let (n, s) = (x.nrows(), model.trace.n_categories);
    let chains: Vec<Vec<f64>> =
        (0..n * s).map(|q| per_sample.iter().map(|p| p.0[(q / s, q % s)]).collect()).collect();
    Ok(EssReport::from_chains(chains.iter().map(Vec::as_slice)))
}

/// Quantiles averaged over independent trials.
#[derive(Debug, Clone, PartialEq)]
pub struct EssSummary {
    pub trials: usize,
    pub quantities: usize,
    pub degenerate: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

impl EssSummary {
    pub fn average(reports: &[EssReport]) -> Self {
        let k = reports.len().max(1) as f64;
        let mean = |f: fn(&EssReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        Self {
            trials: reports.len(),
            quantities: reports.first().map_or(0, |r| r.values.len()),
            degenerate: mean(|r| r.degenerate as f64),
            q10: mean(|r| r.q10),
            median: mean(|r| r.median),
            q90: mean(|r| r.q90),
        }
    }

    pub fn csv_header() -> &'static str {
        "set,trials,quantities,degenerate,q10,median,q90"
    }

    pub fn csv_row(&self, set: &str) -> String {
        format!(
            "{set},{},{},{},{:.2},{:.2},{:.2}",
            self.trials, self.quantities, self.degenerate, self.q10, self.median, self.q90
        )
    }
}
