//! Subcommand definitions and their implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pasb_core::data::{format_dataset, write_dataset, Dataset, Format, KernelWidth};
use pasb_core::diagnostics::{error_rate, log_likelihood};
use pasb_core::links::{LinkSpec, SvmSpec};
use pasb_core::rng::RngStream;
use pasb_core::sampling::PgMode;
use pasb_core::softplus::{transform_design, MsrSpec, TransformRecord};
use pasb_core::stickbreak::{CategoryStickMapping, Construction, McmcConfig};

use crate::benchmark::{detail_csv, load_suite, run_suite, table_csv};
use crate::error::CliError;
use crate::model_file::ModelFile;
use crate::pipeline::TransformStage;
use crate::report::{ess_report, heatmap, BoundingBox, EssSummary};
use crate::synth;
use crate::train::{fit_with, load_raw, predict_probabilities, KernelChoice, PredictMode, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "pasb", version, about = "Bayesian multinomial regression with permuted and augmented stick breaking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write a model file.
    Train(TrainArgs),
    /// Predict category probabilities and labels.
    Predict(PredictArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Predictive probabilities on a 2-D grid, one CSV per category.
    Heatmap(HeatmapArgs),
    /// Append softplus features from a trained MSR model.
    Transform(TransformArgs),
    /// Run a benchmark suite.
    Benchmark(BenchmarkArgs),
    /// Effective sample sizes of the predictive probabilities.
    Ess(EssArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LinkArg {
    Logistic,
    Robit,
    Svm,
    Msr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstructionArg {
    Pasb,
    Parsb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Average,
    BestSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Square101,
    SquareK,
    VehicleOutliers,
    Swissroll2d,
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Total sweeps; defaults depend on the link.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, value_enum, default_value_t = ConstructionArg::Pasb)]
    pub construction: ConstructionArg,
    /// Keep the category-to-stick mapping fixed.
    #[arg(long)]
    pub no_permute: bool,
    /// Start (or fixed) mapping as a one-based list, e.g. 2,1,3.
    #[arg(long)]
    pub z: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub link: LinkArg,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// MSR experts K.
    #[arg(long, default_value_t = 5)]
    pub experts: usize,
    /// MSR hyperplanes per expert T.
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    /// Robit degrees of freedom.
    #[arg(long, default_value_t = 6.0)]
    pub dof: f64,
    /// Standardize covariates with training means and deviations.
    #[arg(long)]
    pub standardize: bool,
    /// Fixed RBF kernel width.
    #[arg(long, conflicts_with = "kernel_grid")]
    pub kernel_width: Option<f64>,
    /// Cross-validate the kernel width over 2^-10..2^10.
    #[arg(long)]
    pub kernel_grid: bool,
    #[arg(long, default_value_t = 3)]
    pub cv_folds: usize,
    /// Use this many explicit gamma terms for non-integer Pólya-Gamma
    /// shapes instead of the default 200.
    #[arg(long)]
    pub pg_terms: Option<usize>,
    /// Apply a trained MSR's hyperplanes to the covariates first.
    #[arg(long)]
    pub transform_from: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_probs: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Average)]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Inner squares for square-k (a perfect square).
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Number of points (square-k, swissroll2d).
    #[arg(long)]
    pub n: Option<usize>,
    /// Inlier dataset for vehicle-outliers.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Outlier-to-inlier ratio.
    #[arg(long, default_value_t = 0.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Also split off a test set written here.
    #[arg(long, requires = "test_fraction")]
    pub test_out: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// xmin,xmax,ymin,ymax
    #[arg(long, allow_hyphen_values = true)]
    pub bbox: String,
    #[arg(long, default_value_t = 100)]
    pub resolution: usize,
    /// Files are written as <prefix>_<label>.csv.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub suite: PathBuf,
    /// Dataset × model table of mean test errors.
    #[arg(long)]
    pub out: PathBuf,
    /// Long-format results with spread and active hyperplanes.
    #[arg(long)]
    pub detail: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EssArgs {
    /// One model per independent trial.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Heatmap(a) => cmd_heatmap(&a),
        Command::Transform(a) => cmd_transform(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Ess(a) => cmd_ess(&a),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// (total, burn-in) used when the flags are absent.
fn default_schedule(link: LinkArg) -> (usize, usize) {
    match link {
        LinkArg::Logistic | LinkArg::Msr => (10_000, 5_000),
        LinkArg::Robit => (8_000, 5_000),
        LinkArg::Svm => (1_000, 500),
    }
}

pub fn mcmc_config(args: &McmcArgs, link: LinkArg) -> Result<McmcConfig, CliError> {
    let (total, burn) = default_schedule(link);
    let total = args.iters.unwrap_or(total);
    let burn = args.burn_in.unwrap_or(if args.iters.is_some() { total / 2 } else { burn });
    let mut config = McmcConfig::new(total, burn, args.seed);
    config.thinning = args.thin;
    config.permute_mapping = !args.no_permute;
    config.construction = match args.construction {
        ConstructionArg::Pasb => Construction::Pasb,
        ConstructionArg::Parsb => Construction::Parsb,
    };
    if let Some(z) = &args.z {
        config.start_mapping = Some(CategoryStickMapping::parse_one_based(z)?);
    }
    config.validate()?;
    Ok(config)
}

pub fn link_spec(a: &TrainArgs) -> Result<LinkSpec, CliError> {
    Ok(match a.link {
        LinkArg::Logistic => LinkSpec::Logistic,
        LinkArg::Robit => {
            if !(a.dof > 0.0) {
                return Err(CliError::Usage("--dof must be positive".into()));
            }
            LinkSpec::Robit { dof: a.dof }
        }
        LinkArg::Svm => LinkSpec::Svm(SvmSpec::default()),
        LinkArg::Msr => {
            if a.experts == 0 || a.layers == 0 {
                return Err(CliError::Usage("--experts and --layers must be positive".into()));
            }
            let mut spec = MsrSpec::new(a.experts, a.layers);
            if let Some(terms) = a.pg_terms {
                spec.pg_mode = PgMode::Approximate { terms };
            }
            LinkSpec::Msr(spec)
        }
    })
}

/// Stage description built from a trained MSR model file.
pub fn transform_stage(model: &ModelFile, fingerprint: &str) -> Result<TransformStage, CliError> {
    let record = transform_record(model, fingerprint)?;
    Ok(TransformStage { pipeline: model.pipeline.clone(), record })
}

/// Active-expert hyperplanes of the highest-likelihood retained sample.
pub fn transform_record(model: &ModelFile, fingerprint: &str) -> Result<TransformRecord, CliError> {
    if !matches!(model.trace.spec, LinkSpec::Msr(_)) {
        return Err(CliError::Usage("data transformation needs an MSR model".into()));
    }
    let best = model.trace.best_sample().ok_or(pasb_core::ModelError::NoSamples)?;
    let params = model.trace.samples[best].params.iter().filter_map(|p| match p {
        pasb_core::links::LinkParams::Msr(m) => Some(m),
        pasb_core::links::LinkParams::Linear(_) => None,
    });
    Ok(TransformRecord::from_params(params, fingerprint.to_string()))
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let train = load_raw(&a.data, None, None)?;
    let mut opts = TrainOptions::new(link_spec(a)?, mcmc_config(&a.mcmc, a.link)?);
    opts.standardize = a.standardize;
    opts.kernel = match (a.kernel_width, a.kernel_grid) {
        (Some(w), _) => KernelChoice::Fixed(KernelWidth::new(w)?),
        (None, true) => KernelChoice::CrossValidate { grid: KernelWidth::default_grid(), folds: a.cv_folds },
        (None, false) => KernelChoice::None,
    };
    if let Some(p) = &a.transform_from {
        let first = ModelFile::load(p)?;
        opts.transform = Some(transform_stage(&first, &p.display().to_string())?);
    }
    // per-sweep trace streamed next to the model file; rewritten on save
    let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let trace_path = a.out.with_file_name(format!("{stem}.trace.csv"));
    let mut trace_file = fs::File::create(&trace_path).map_err(|e| CliError::io(&trace_path, e))?;
    writeln!(trace_file, "sweep,log_likelihood,accepted,mapping").map_err(|e| CliError::io(&trace_path, e))?;
    let mut write_err = None;
    let model = fit_with(&train, &opts, |t, state, rec| {
        let z: Vec<String> = state.mapping.as_slice().iter().map(|j| (j + 1).to_string()).collect();
        if let Err(e) = writeln!(trace_file, "{},{},{},{}", t + 1, rec.log_likelihood, u8::from(rec.accepted), z.join(" ")) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(CliError::io(&trace_path, e));
    }
    drop(trace_file);
    model.save(&a.out)?;
    let final_ll = model.trace.log_likelihood.last().copied().unwrap_or(f64::NAN);
    eprintln!(
        "trained {} ({}) on {} rows: final log-likelihood {final_ll:.3}, {} retained samples",
        model.trace.spec.name(),
        model.trace.construction.name(),
        train.len(),
        model.trace.samples.len()
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?;
    let data = load_raw(&a.data, Some(model.label_map()), Some(model.pipeline.n_covariates))?;
    let mode = match a.mode {
        ModeArg::Average => PredictMode::Average,
        ModeArg::BestSample => PredictMode::BestSample,
    };
    let probs = predict_probabilities(&model, &data.covariates(), mode)?;
    let mut out = model.labels.join(",") + "\n";
    for i in 0..probs.nrows() {
        let row: Vec<String> = (0..probs.ncols()).map(|s| fmt_prob(probs.0[(i, s)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(&a.out_probs, &out)?;
    let mut labels = String::from("label\n");
    for c in probs.argmax() {
        labels.push_str(&model.labels[c]);
        labels.push('\n');
    }
    write_file(&a.out_labels, &labels)?;
    eprintln!(
        "{} rows: error {:.2}%, log-likelihood {:.3}",
        data.len(),
        error_rate(&probs, &data.y)?,
        log_likelihood(&probs, &data.y)
    );
    Ok(())
}

/// Shortest round-trip form; scientific below 1e-4 to keep columns short.
fn fmt_prob(p: f64) -> String {
    if p != 0.0 && p.abs() < 1e-4 {
        format!("{p:e}")
    } else {
        p.to_string()
    }
}

fn write_with_split(ds: &Dataset, a: &SynthArgs) -> Result<(), CliError> {
    let format = Format::from_path(&a.out);
    match (&a.test_out, a.test_fraction) {
        (Some(test_out), Some(f)) => {
            if !(0.0..1.0).contains(&f) {
                return Err(CliError::Usage("--test-fraction must be in [0, 1)".into()));
            }
            let (train, test) = pasb_core::data::random_split(ds.len(), 1.0 - f, &RngStream::new(a.seed).child(1));
            write_dataset(&ds.subset(&train), &a.out, format)?;
            write_dataset(&ds.subset(&test), test_out, Format::from_path(test_out))?;
        }
        _ => write_dataset(ds, &a.out, format)?,
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let stream = RngStream::new(a.seed);
    match a.kind {
        SynthKind::Square101 => write_with_split(&synth::square101(&stream), a),
        SynthKind::SquareK => {
            let n = a.n.unwrap_or(500);
            write_with_split(&synth::nested_squares(a.k, n, &stream)?, a)
        }
        SynthKind::Swissroll2d => {
            let n = a.n.unwrap_or(400);
            write_with_split(&synth::swiss_roll(n, a.noise, &stream)?, a)
        }
        SynthKind::VehicleOutliers => {
            let input = a.input.as_ref().ok_or_else(|| CliError::Usage("vehicle-outliers needs --input".into()))?;
            let inliers = load_raw(input, None, None)?;
            let count = synth::outlier_count(inliers.len(), a.ratio)?;
            let mut bytes = fs::read(input).map_err(|e| CliError::io(input, e))?;
            if count > 0 {
                let extra = synth::outliers(inliers.n_covariates(), &inliers.labels, count, &stream)?;
                let format = Format::from_path(input);
                let text = format_dataset(&extra, format);
                // keep the input bytes; drop the header of the appended block
                let body = match format {
                    Format::Csv => text.split_once('\n').map_or("", |(_, rest)| rest).to_string(),
                    Format::Libsvm => text,
                };
                if !bytes.is_empty() && !bytes.ends_with(b"\n") {
                    bytes.push(b'\n');
                }
                bytes.extend_from_slice(body.as_bytes());
            }
            fs::write(&a.out, bytes).map_err(|e| CliError::io(&a.out, e))
        }
    }
}

fn cmd_heatmap(a: &HeatmapArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?;
    if model.pipeline.n_covariates != 2 {
        return Err(CliError::Usage(format!("heatmaps need a 2-covariate model, this one has {}", model.pipeline.n_covariates)));
    }
    let grids = heatmap(&model, BoundingBox::parse(&a.bbox)?, a.resolution)?;
    let prefix = a.out_prefix.display().to_string();
    for (label, grid) in model.labels.iter().zip(&grids) {
        write_file(Path::new(&format!("{prefix}_{label}.csv")), grid)?;
    }
    Ok(())
}

fn cmd_transform(a: &TransformArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?;
    let data = load_raw(&a.data, Some(model.label_map()), Some(model.pipeline.n_covariates))?;
    let record = transform_record(&model, &a.model.display().to_string())?;
    let design = model.pipeline.design(&data.covariates())?;
    let augmented = transform_design(&design, &record)?;
    let cov = if model.pipeline.has_intercept() { augmented.remove_column(0) } else { augmented };
    let out = data.with_design(cov);
    write_dataset(&out, &a.out, Format::from_path(&a.out))?;
    eprintln!("appended {} softplus features", record.hyperplanes.len());
    Ok(())
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<(), CliError> {
    let suite = load_suite(&a.suite)?;
    let rows = run_suite(&suite, |r| {
        eprintln!("{} / {}: {}", r.dataset, r.model, if r.status == "ok" { format!("{:.2}%", r.mean_error()) } else { r.status.clone() });
    });
    write_file(&a.out, &table_csv(&suite, &rows))?;
    if let Some(p) = &a.detail {
        write_file(p, &detail_csv(&rows))?;
    }
    Ok(())
}

fn cmd_ess(a: &EssArgs) -> Result<(), CliError> {
    let models = a.model.iter().map(|p| ModelFile::load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut sets = vec![("train", &a.train)];
    if let Some(t) = &a.test {
        sets.push(("test", t));
    }
    let mut out = String::from(EssSummary::csv_header());
    out.push('\n');
    for (name, path) in sets {
        let mut reports = Vec::new();
        for m in &models {
            let data = load_raw(path, Some(m.label_map()), Some(m.pipeline.n_covariates))?;
            reports.push(ess_report(m, &data.covariates())?);
        }
        out.push_str(&EssSummary::average(&reports).csv_row(name));
        out.push('\n');
    }
    write_file(&a.out, &out)
}
