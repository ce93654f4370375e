//! Benchmark suites: datasets × models over fixed train/test partitions.

use std::fs;
use std::path::{Path, PathBuf};

use pasb_core::data::{stratified_split, Dataset, KernelWidth};
use pasb_core::diagnostics::error_rate;
use pasb_core::links::{LinkSpec, SvmSpec};
use pasb_core::rng::RngStream;
use pasb_core::sampling::PgMode;
use pasb_core::softplus::MsrSpec;
use pasb_core::stickbreak::{CategoryStickMapping, Construction, McmcConfig, ProbabilityMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::train::{active_hyperplanes, fit, load_raw, predict_probabilities, KernelChoice, PredictMode, TrainOptions};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub dataset: Vec<DatasetEntry>,
    #[serde(default)]
    pub model: Vec<ModelEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    /// Partition manifest; generated stratified partitions when absent.
    pub splits: Option<PathBuf>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_partitions")]
    pub partitions: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_partitions() -> usize {
    5
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstructionChoice {
    Pasb,
    Parsb,
    /// Average the predictive probabilities of a paSB and a parSB run.
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    /// logistic, robit, svm or msr.
    pub link: String,
    #[serde(default = "default_construction")]
    pub construction: ConstructionChoice,
    pub iters: usize,
    pub burn_in: usize,
    #[serde(default = "default_one")]
    pub thin: usize,
    #[serde(default = "default_one_u64")]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub permute: bool,
    pub dof: Option<f64>,
    pub experts: Option<usize>,
    pub layers: Option<usize>,
    /// Explicit gamma terms for non-integer Pólya-Gamma shapes; selects the
    /// approximate sampler.
    pub pg_terms: Option<usize>,
    /// Kernel widths to cross-validate (svm); defaults to 2^-10..2^10.
    pub kernel_widths: Option<Vec<f64>>,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
}

fn default_construction() -> ConstructionChoice {
    ConstructionChoice::Pasb
}

fn default_one() -> usize {
    1
}

fn default_one_u64() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

fn default_folds() -> usize {
    3
}

impl ModelEntry {
    pub fn link_spec(&self) -> Result<LinkSpec, CliError> {
        match self.link.as_str() {
            "logistic" => Ok(LinkSpec::Logistic),
            "robit" => Ok(LinkSpec::Robit { dof: self.dof.unwrap_or(6.0) }),
            "svm" => Ok(LinkSpec::Svm(SvmSpec::default())),
            "msr" => {
                let mut spec = MsrSpec::new(self.experts.unwrap_or(1), self.layers.unwrap_or(1));
                if let Some(terms) = self.pg_terms {
                    spec.pg_mode = PgMode::Approximate { terms };
                }
                Ok(LinkSpec::Msr(spec))
            }
            other => Err(CliError::Usage(format!("model {}: unknown link {other:?}", self.name))),
        }
    }

    fn options(&self, construction: Construction) -> Result<TrainOptions, CliError> {
        let mut mcmc = McmcConfig::new(self.iters, self.burn_in, self.seed);
        mcmc.thinning = self.thin;
        mcmc.permute_mapping = self.permute;
        mcmc.construction = construction;
        mcmc.validate()?;
        let mut opts = TrainOptions::new(self.link_spec()?, mcmc);
        opts.standardize = false;
        if self.link == "svm" {
            let grid = match &self.kernel_widths {
                Some(ws) => ws.iter().map(|&w| KernelWidth::new(w)).collect::<Result<Vec<_>, _>>()?,
                None => KernelWidth::default_grid(),
            };
            opts.kernel = KernelChoice::CrossValidate { grid, folds: self.cv_folds };
        }
        Ok(opts)
    }

    fn constructions(&self) -> Vec<Construction> {
        match self.construction {
            ConstructionChoice::Pasb => vec![Construction::Pasb],
            ConstructionChoice::Parsb => vec![Construction::Parsb],
            ConstructionChoice::Both => vec![Construction::Pasb, Construction::Parsb],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dataset: String,
    pub partitions: Vec<Partition>,
}

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    /// Stratified partitions with seeds 1000, 1001, ….
    pub fn generate(name: &str, ds: &Dataset, count: usize, train_fraction: f64) -> Self {
        let partitions = (0..count as u64)
            .map(|p| {
                let seed = 1000 + p;
                let (train, test) = stratified_split(&ds.y, ds.n_categories, train_fraction, &RngStream::new(seed));
                Partition { seed, train, test }
            })
            .collect();
        Self { dataset: name.to_string(), partitions }
    }
}

/// Outcome of one model on one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub error: f64,
    pub active_hyperplanes: Option<f64>,
    pub probabilities: ProbabilityMatrix,
    /// Final mapping of every construction that was run.
    pub mappings: Vec<CategoryStickMapping>,
}

/// Train on `train` rows and score `test` rows, averaging the predictive
/// probabilities over the entry's constructions.
pub fn run_partition(
    ds: &Dataset,
    partition: &Partition,
    standardize: bool,
    model: &ModelEntry,
) -> Result<CellRun, CliError> {
    let train = ds.subset(&partition.train);
    let test = ds.subset(&partition.test);
    let test_raw = test.covariates();
    let mut parts = Vec::new();
    let mut active = Vec::new();
    let mut mappings = Vec::new();
    for construction in model.constructions() {
        let mut opts = model.options(construction)?;
        opts.standardize = standardize;
        let fitted = fit(&train, &opts)?;
        parts.push(predict_probabilities(&fitted, &test_raw, PredictMode::Average)?);
        active.extend(active_hyperplanes(&fitted.trace));
        if let Some(z) = fitted.final_mapping() {
            mappings.push(z.clone());
        }
    }
    let refs: Vec<&ProbabilityMatrix> = parts.iter().collect();
    let probabilities = ProbabilityMatrix::average(&refs);
    let error = error_rate(&probabilities, &test.y)?;
    let active_hyperplanes = (!active.is_empty()).then(|| active.iter().sum::<f64>() / active.len() as f64);
    Ok(CellRun { error, active_hyperplanes, probabilities, mappings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub model: String,
    pub errors: Vec<f64>,
    pub active_hyperplanes: Option<f64>,
    /// `ok`, `missing`, or an error message.
    pub status: String,
}

impl BenchmarkRow {
    pub fn mean_error(&self) -> f64 {
        if self.errors.is_empty() {
            return f64::NAN;
        }
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    pub fn sd_error(&self) -> f64 {
        let n = self.errors.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_error();
        (self.errors.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

pub fn load_suite(path: &Path) -> Result<Suite, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut suite: Suite = toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for d in &mut suite.dataset {
        d.path = base.join(&d.path);
        if let Some(s) = &d.splits {
            d.splits = Some(base.join(s));
        }
    }
    Ok(suite)
}

/// Run every model on every dataset. A dataset that cannot be loaded yields
/// `missing` rows and the suite continues.
pub fn run_suite(suite: &Suite, mut progress: impl FnMut(&BenchmarkRow)) -> Vec<BenchmarkRow> {
    let mut rows = Vec::new();
    for entry in &suite.dataset {
        let loaded = load_raw(&entry.path, None, None).and_then(|ds| {
            let manifest = match &entry.splits {
                Some(p) => SplitManifest::load(p)?,
                None => SplitManifest::generate(&entry.name, &ds, entry.partitions, entry.train_fraction),
            };
            Ok((ds, manifest))
        });
        for model in &suite.model {
            let row = match &loaded {
                Err(e) => BenchmarkRow {
                    dataset: entry.name.clone(),
                    model: model.name.clone(),
                    errors: Vec::new(),
                    active_hyperplanes: None,
                    status: format!("missing: {e}"),
                },
                Ok((ds, manifest)) => run_cell(&entry.name, ds, manifest, entry.standardize, model),
            };
            progress(&row);
            rows.push(row);
        }
    }
    rows
}

fn run_cell(name: &str, ds: &Dataset, manifest: &SplitManifest, standardize: bool, model: &ModelEntry) -> BenchmarkRow {
    let mut errors = Vec::new();
    let mut active = Vec::new();
    let mut status = "ok".to_string();
    for p in &manifest.partitions {
        match run_partition(ds, p, standardize, model) {
            Ok(cell) => {
                errors.push(cell.error);
                active.extend(cell.active_hyperplanes);
            }
            Err(e) => {
                status = format!("failed: {e}");
                break;
            }
        }
    }
    BenchmarkRow {
        dataset: name.to_string(),
        model: model.name.clone(),
        errors,
        active_hyperplanes: (!active.is_empty()).then(|| active.iter().sum::<f64>() / active.len() as f64),
        status,
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One line per dataset, one column per model: mean test error (%).
pub fn table_csv(suite: &Suite, rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("dataset");
    for m in &suite.model {
        out.push(',');
        out.push_str(&csv_field(&m.name));
    }
    out.push('\n');
    for d in &suite.dataset {
        out.push_str(&csv_field(&d.name));
        for m in &suite.model {
            out.push(',');
            if let Some(r) = rows.iter().find(|r| r.dataset == d.name && r.model == m.name) {
                if r.status == "ok" {
                    out.push_str(&format!("{:.2}", r.mean_error()));
                } else {
                    // full reason goes to the detail file
                    out.push_str(r.status.split(':').next().unwrap_or("failed"));
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Long format with spread, partition count, active hyperplanes and status.
pub fn detail_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("dataset,model,partitions,error_mean,error_sd,active_hyperplanes,status\n");
    for r in rows {
        let mean = if r.errors.is_empty() { String::new() } else { format!("{:.4}", r.mean_error()) };
        let sd = if r.errors.is_empty() { String::new() } else { format!("{:.4}", r.sd_error()) };
        let active = r.active_hyperplanes.map(|a| format!("{a:.2}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&r.dataset),
            csv_field(&r.model),
            r.errors.len(),
            mean,
            sd,
            active,
            csv_field(&r.status)
        ));
    }
    out
}

