//! Covariate preprocessing recorded in a model file and replayed at
//! prediction time.

use nalgebra::DMatrix;
use pasb_core::data::{rbf_kernel_features, with_intercept, KernelWidth, Standardizer};
use pasb_core::softplus::{transform_design, TransformRecord};
use pasb_core::DataError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub width: f64,
    /// Training rows (after standardization) the kernel is centred on.
    pub centers: Vec<Vec<f64>>,
}

/// An earlier MSR's hyperplanes applied before this pipeline's own steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformStage {
    pub pipeline: FeaturePipeline,
    pub record: TransformRecord,
}

impl TransformStage {
    /// The earlier model's design, minus its intercept column, with one
    /// softplus feature per stored hyperplane appended.
    pub fn apply(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>, DataError> {
        let design = self.pipeline.design(raw)?;
        let out = transform_design(&design, &self.record)?;
        if self.pipeline.has_intercept() {
            Ok(out.remove_column(0))
        } else {
            Ok(out)
        }
    }
}

/// raw covariates → optional transform stage → optional standardization →
/// kernel features or an intercept column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub n_covariates: usize,
    pub intercept: bool,
    pub standardizer: Option<Standardizer>,
    pub kernel: Option<KernelRecord>,
    pub transform: Option<Box<TransformStage>>,
}

impl FeaturePipeline {
    /// Fit on raw training covariates.
    pub fn fit(
        raw: &DMatrix<f64>,
        standardize: bool,
        kernel: Option<KernelWidth>,
        transform: Option<TransformStage>,
    ) -> Result<Self, DataError> {
        let mut cov = match &transform {
            Some(t) => t.apply(raw)?,
            None => raw.clone(),
        };
        let standardizer = if standardize {
            let st = Standardizer::fit(&cov);
            cov = st.apply(&cov)?;
            Some(st)
        } else {
            None
        };
        let kernel = kernel.map(|w| KernelRecord {
            width: w.get(),
            centers: cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        });
        Ok(Self {
            n_covariates: raw.ncols(),
            intercept: kernel.is_none(),
            standardizer,
            kernel,
            transform: transform.map(Box::new),
        })
    }

    /// Whether column 0 of the design is a constant 1.
    pub fn has_intercept(&self) -> bool {
        self.intercept || self.kernel.is_some()
    }

    pub fn design(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>, DataError> {
        if raw.ncols() != self.n_covariates {
            return Err(DataError::DimensionMismatch { expected: self.n_covariates, found: raw.ncols() });
        }
        let mut cov = match &self.transform {
            Some(t) => t.apply(raw)?,
            None => raw.clone(),
        };
        if let Some(st) = &self.standardizer {
            cov = st.apply(&cov)?;
        }
        if let Some(k) = &self.kernel {
            let p = k.centers.first().map_or(0, Vec::len);
            let centers = DMatrix::from_fn(k.centers.len(), p, |i, j| k.centers[i][j]);
            return rbf_kernel_features(&centers, &cov, KernelWidth::new(k.width)?);
        }
        Ok(if self.intercept { with_intercept(&cov) } else { cov })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_and_standardization() {
        let raw = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let p = FeaturePipeline::fit(&raw, true, None, None).unwrap();
        let d = p.design(&raw).unwrap();
        assert_eq!(d.ncols(), 2);
        assert_eq!(d[(1, 0)], 1.0);
        assert!(d[(1, 1)].abs() < 1e-15);
        assert!(p.design(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn kernel_design_has_one_column_per_center() {
        let raw = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let p = FeaturePipeline::fit(&raw, false, Some(KernelWidth::new(0.5).unwrap()), None).unwrap();
        let d = p.design(&raw.rows(0, 2).into_owned()).unwrap();
        assert_eq!((d.nrows(), d.ncols()), (2, 5));
        assert_eq!(d[(0, 1)], 1.0);
        assert!((d[(0, 2)] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn transform_stage_appends_features() {
        let raw = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let first = FeaturePipeline::fit(&raw, false, None, None).unwrap();
        let record = TransformRecord { hyperplanes: vec![vec![0.0, 1.0]], fingerprint: "m".into() };
        let stage = TransformStage { pipeline: first, record };
        let p = FeaturePipeline::fit(&raw, false, None, Some(stage)).unwrap();
        let d = p.design(&raw).unwrap();
        assert_eq!(d.ncols(), 3);
        assert!((d[(0, 2)] - 2f64.ln()).abs() < 1e-15);
        assert!((d[(1, 1)] - 2.0).abs() < 1e-15);
    }
}
