//! Versioned model files.
//!
//! `<name>.json` holds everything but the posterior coefficient arrays, which
//! live in `<name>.params.bin` as little-endian f64 values: for each retained
//! sample, for each category, either the `dim` linear coefficients or, for
//! MSR, `K` expert weights, `K·T·dim` hyperplane coefficients (expert-major,
//! then layer), and `K` activity flags (1.0 / 0.0). The per-sweep trace
//! (log-likelihood, acceptance, mapping) goes to `<name>.trace.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use pasb_core::data::LabelMap;
use pasb_core::links::{LinkParams, LinkSpec};
use pasb_core::softplus::MsrParams;
use pasb_core::stickbreak::{CategoryStickMapping, Construction, McmcConfig, PosteriorSample, TraceStore};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::pipeline::FeaturePipeline;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub pipeline: FeaturePipeline,
    /// Original label of each category.
    pub labels: Vec<String>,
    pub mcmc: McmcConfig,
    pub trace: TraceStore,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleHeader {
    sweep: usize,
    /// One-based stick of each category.
    mapping: Vec<usize>,
    log_likelihood: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    construction: Construction,
    link: LinkSpec,
    pipeline: FeaturePipeline,
    labels: Vec<String>,
    n_categories: usize,
    dim: usize,
    seed: u64,
    mcmc: McmcConfig,
    final_mapping: Vec<usize>,
    params_file: String,
    params_encoding: String,
    trace_file: String,
    samples: Vec<SampleHeader>,
}

fn one_based(z: &CategoryStickMapping) -> Vec<usize> {
    z.as_slice().iter().map(|j| j + 1).collect()
}

fn from_one_based(z: &[usize], path: &Path) -> Result<CategoryStickMapping, CliError> {
    let zero: Vec<usize> = z.iter().map(|&j| j.wrapping_sub(1)).collect();
    CategoryStickMapping::new(zero).map_err(|e| CliError::format(path, e.to_string()))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

impl ModelFile {
    pub fn label_map(&self) -> LabelMap {
        LabelMap::from_raw(&self.labels)
    }

    pub fn final_mapping(&self) -> Option<&CategoryStickMapping> {
        self.trace.mapping_trace.last()
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let params_path = sidecar(path, "params.bin");
        let trace_path = sidecar(path, "trace.csv");
        let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let header = Header {
            format_version: FORMAT_VERSION,
            construction: self.trace.construction,
            link: self.trace.spec.clone(),
            pipeline: self.pipeline.clone(),
            labels: self.labels.clone(),
            n_categories: self.trace.n_categories,
            dim: self.trace.dim,
            seed: self.mcmc.seed,
            mcmc: self.mcmc.clone(),
            final_mapping: self.final_mapping().map(one_based).unwrap_or_default(),
            params_file: name(&params_path),
            params_encoding: "f64-le".into(),
            trace_file: name(&trace_path),
            samples: self
                .trace
                .samples
                .iter()
                .map(|s| SampleHeader {
                    sweep: s.sweep,
                    mapping: one_based(&s.mapping),
                    log_likelihood: s.log_likelihood,
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&header).map_err(|e| CliError::format(path, e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))?;

        let mut bytes = Vec::new();
        for s in &self.trace.samples {
            for p in &s.params {
                encode_params(p, &mut bytes);
            }
        }
        fs::write(&params_path, bytes).map_err(|e| CliError::io(&params_path, e))?;

        let mut csv = String::from("sweep,log_likelihood,accepted,mapping\n");
        for (t, ll) in self.trace.log_likelihood.iter().enumerate() {
            let z = one_based(&self.trace.mapping_trace[t]);
            let z: Vec<String> = z.iter().map(ToString::to_string).collect();
            csv.push_str(&format!("{},{},{},{}\n", t + 1, ll, u8::from(self.trace.accepted[t]), z.join(" ")));
        }
        fs::write(&trace_path, csv).map_err(|e| CliError::io(&trace_path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let header: Header = serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(CliError::format(path, format!("unsupported format version {}", header.format_version)));
        }
        let params_path = path.with_file_name(&header.params_file);
        let bytes = fs::read(&params_path).map_err(|e| CliError::io(&params_path, e))?;
        let layout = Layout::of(&header.link, header.dim);
        let per_sample = layout.len() * header.n_categories;
        if bytes.len() != 8 * per_sample * header.samples.len() {
            return Err(CliError::format(
                &params_path,
                format!("expected {} values, found {} bytes", per_sample * header.samples.len(), bytes.len()),
            ));
        }
        let values: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let mut samples = Vec::with_capacity(header.samples.len());
        for (i, meta) in header.samples.iter().enumerate() {
            let block = &values[i * per_sample..(i + 1) * per_sample];
            let params = block.chunks_exact(layout.len()).map(|c| layout.decode(c)).collect();
            samples.push(PosteriorSample {
                sweep: meta.sweep,
                params,
                mapping: from_one_based(&meta.mapping, path)?,
                log_likelihood: meta.log_likelihood,
            });
        }

        let trace_path = path.with_file_name(&header.trace_file);
        let csv = fs::read_to_string(&trace_path).map_err(|e| CliError::io(&trace_path, e))?;
        let mut log_likelihood = Vec::new();
        let mut accepted = Vec::new();
        let mut mapping_trace = Vec::new();
        for (n, line) in csv.lines().enumerate().skip(1) {
            let bad = || CliError::format(&trace_path, format!("malformed line {}", n + 1));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(bad());
            }
            log_likelihood.push(fields[1].parse::<f64>().map_err(|_| bad())?);
            accepted.push(fields[2] == "1");
            let z = fields[3].split(' ').map(|t| t.parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?;
            mapping_trace.push(from_one_based(&z, &trace_path)?);
        }

        Ok(Self {
            pipeline: header.pipeline,
            labels: header.labels,
            mcmc: header.mcmc,
            trace: TraceStore {
                spec: header.link,
                construction: header.construction,
                n_categories: header.n_categories,
                dim: header.dim,
                samples,
                log_likelihood,
                mapping_trace,
                accepted,
            },
        })
    }
}

enum Layout {
    Linear { dim: usize },
    Msr { experts: usize, layers: usize, dim: usize },
}

impl Layout {
    fn of(spec: &LinkSpec, dim: usize) -> Self {
        match spec {
            LinkSpec::Msr(m) => Layout::Msr { experts: m.experts, layers: m.layers, dim },
            _ => Layout::Linear { dim },
        }
    }

    fn len(&self) -> usize {
        match *self {
            Layout::Linear { dim } => dim,
            Layout::Msr { experts, layers, dim } => experts * (2 + layers * dim),
        }
    }

    fn decode(&self, v: &[f64]) -> LinkParams {
        match *self {
            Layout::Linear { .. } => LinkParams::Linear(v.to_vec()),
            Layout::Msr { experts, layers, dim } => {
                let r = v[..experts].to_vec();
                let betas_end = experts + experts * layers * dim;
                let betas = v[experts..betas_end].chunks_exact(dim).map(<[f64]>::to_vec).collect();
                let active = v[betas_end..].iter().map(|&f| f != 0.0).collect();
                LinkParams::Msr(MsrParams { layers, r, betas, active })
            }
        }
    }
}

fn encode_params(p: &LinkParams, out: &mut Vec<u8>) {
    let mut push = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    match p {
        LinkParams::Linear(beta) => beta.iter().for_each(|&b| push(b)),
        LinkParams::Msr(m) => {
            m.r.iter().for_each(|&r| push(r));
            m.betas.iter().flatten().for_each(|&b| push(b));
            m.active.iter().for_each(|&a| push(if a { 1.0 } else { 0.0 }));
        }
    }
}
