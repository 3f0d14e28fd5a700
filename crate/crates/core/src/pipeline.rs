//! End-to-end runs behind the command-line tool: build an adapter from a
//! spec string, run analyses, write artifacts and a manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapter::{
    train_toy, Adapter, AdapterError, Capabilities, ConstantAdapter, DumpAdapter, DumpFile, DumpRow, ExecAdapter,
    Perturbation, PooledAdapter, Probe, Session, ToyAdapter, ToyError, ToyModel,
};
use crate::analysis::{
    answer_novelty_analysis, failure_analysis, image_consistency, modality_ablation, novelty_analysis,
    pos_drop_probe, prefix_probe, AnalysisError, Report,
};
use crate::config::{ConfigError, RunConfig};
use crate::data::{DataError, Dataset, DatasetFiles, Split};
use crate::report::{self, ReportError};
use crate::synth::{oracle_for, PlantDescriptor, SynthError, PLANT_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl PipelineError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Data(_) => "data",
            PipelineError::Adapter(AdapterError::Capability { .. })
            | PipelineError::Analysis(AnalysisError::Capability(_))
            | PipelineError::Analysis(AnalysisError::Adapter(AdapterError::Capability { .. })) => "capability",
            PipelineError::Adapter(_) | PipelineError::Analysis(AnalysisError::Adapter(_)) => "adapter",
            PipelineError::Analysis(_) => "analysis",
            PipelineError::Report(_) => "report",
            PipelineError::Synth(_) => "synth",
            PipelineError::Toy(_) => "model",
            PipelineError::Io { .. } => "io",
            PipelineError::Usage(_) => "usage",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_file(path: &Path, name: impl Into<String>) -> Result<FileDigest, PipelineError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Ok(FileDigest { name: name.into(), sha256: sha256_hex(&bytes) })
    }
}

/// Where predictions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterSpec {
    /// Toy model trained on the dataset's train split.
    Toy,
    /// Toy model loaded from a saved file.
    ToyFile(PathBuf),
    /// External process speaking the wire protocol.
    Exec(String),
    Dump(PathBuf),
    Const(String),
    /// Reference oracle for a synthetic dataset's plant.
    Oracle,
}

impl FromStr for AdapterSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match (head, rest) {
            ("toy", "") => Ok(AdapterSpec::Toy),
            ("toy", path) => Ok(AdapterSpec::ToyFile(path.into())),
            ("exec", cmd) if !cmd.is_empty() => Ok(AdapterSpec::Exec(cmd.into())),
            ("dump", path) if !path.is_empty() => Ok(AdapterSpec::Dump(path.into())),
            ("const", answer) if !answer.is_empty() => Ok(AdapterSpec::Const(answer.into())),
            ("oracle", "") => Ok(AdapterSpec::Oracle),
            _ => Err(format!(
                "unknown adapter {s:?} (expected toy, toy:<file>, exec:<cmd>, dump:<file>, const:<answer> or oracle)"
            )),
        }
    }
}

impl fmt::Display for AdapterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterSpec::Toy => f.write_str("toy"),
            AdapterSpec::ToyFile(p) => write!(f, "toy:{}", p.display()),
            AdapterSpec::Exec(c) => write!(f, "exec:{c}"),
            AdapterSpec::Dump(p) => write!(f, "dump:{}", p.display()),
            AdapterSpec::Const(a) => write!(f, "const:{a}"),
            AdapterSpec::Oracle => f.write_str("oracle"),
        }
    }
}

pub struct BuiltAdapter {
    pub adapter: Box<dyn Adapter>,
    /// Files the adapter was built from.
    pub inputs: Vec<FileDigest>,
}

pub fn build_adapter(
    spec: &AdapterSpec,
    dataset: &Dataset,
    data_dir: &Path,
    cfg: &RunConfig,
) -> Result<BuiltAdapter, PipelineError> {
    let images = || Arc::new(dataset.image_features.clone());
    let (adapter, inputs): (Box<dyn Adapter>, Vec<FileDigest>) = match spec {
        AdapterSpec::Toy => {
            let model = train_toy(dataset, cfg.toy)?;
            (Box::new(ToyAdapter::new(Arc::new(model), images())?), Vec::new())
        }
        AdapterSpec::ToyFile(path) => {
            let model = ToyModel::load(path)?;
            let label = format!("toy:{}", path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default());
            let adapter = ToyAdapter::new(Arc::new(model), images())?.with_label(label);
            (Box::new(adapter), vec![FileDigest::of_file(path, path.display().to_string())?])
        }
        AdapterSpec::Exec(cmd) => {
            let adapter: Box<dyn Adapter> = if cfg.workers > 1 {
                let workers = (0..cfg.workers)
                    .map(|_| ExecAdapter::spawn(cmd).map(|a| Box::new(a) as Box<dyn Adapter>))
                    .collect::<Result<Vec<_>, _>>()?;
                Box::new(PooledAdapter::new(workers))
            } else {
                Box::new(ExecAdapter::spawn(cmd)?)
            };
            (adapter, Vec::new())
        }
        AdapterSpec::Dump(path) => {
            (Box::new(DumpAdapter::open(path)?), vec![FileDigest::of_file(path, path.display().to_string())?])
        }
        AdapterSpec::Const(answer) => (Box::new(ConstantAdapter::new(answer.clone())), Vec::new()),
        AdapterSpec::Oracle => {
            let path = data_dir.join(PLANT_FILE);
            let plant = PlantDescriptor::read(&path)?;
            (oracle_for(dataset, &plant)?, vec![FileDigest::of_file(&path, PLANT_FILE)?])
        }
    };
    Ok(BuiltAdapter { adapter, inputs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Novelty,
    AnswerNovelty,
    Failure,
    Question,
    Pos,
    Image,
    Ablation,
}

impl Analysis {
    pub const ALL: [Analysis; 7] = [
        Analysis::Novelty,
        Analysis::AnswerNovelty,
        Analysis::Failure,
        Analysis::Question,
        Analysis::Pos,
        Analysis::Image,
        Analysis::Ablation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Novelty => "novelty",
            Analysis::AnswerNovelty => "answer-novelty",
            Analysis::Failure => "failure",
            Analysis::Question => "question",
            Analysis::Pos => "pos",
            Analysis::Image => "image",
            Analysis::Ablation => "ablation",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Analysis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.replace('_', "-");
        Analysis::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| format!("unknown analysis {s:?}"))
    }
}

pub fn run_analysis(
    analysis: Analysis,
    dataset: &Dataset,
    session: &mut Session,
    cfg: &RunConfig,
) -> Result<Report, AnalysisError> {
    let opts = cfg.analysis_options();
    Ok(match analysis {
        Analysis::Novelty => Report::Novelty(novelty_analysis(dataset, session, &cfg.k, cfg.metric, &opts)?),
        Analysis::AnswerNovelty => {
            Report::AnswerNovelty(answer_novelty_analysis(dataset, session, &cfg.k, cfg.metric, &opts)?)
        }
        Analysis::Failure => Report::Failure(failure_analysis(
            dataset,
            session,
            cfg.failure_feature,
            &cfg.k,
            cfg.metric,
            cfg.seed,
            &opts,
        )?),
        Analysis::Question => Report::Question(prefix_probe(dataset, session, &cfg.prefix_grid, &opts)?),
        Analysis::Pos => Report::Pos(pos_drop_probe(dataset, session, &cfg.pos_groups, &opts)?),
        Analysis::Image => Report::Image(image_consistency(dataset, session, &cfg.image, &opts)?),
        Analysis::Ablation => Report::Ablation(modality_ablation(dataset, session, &opts)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterRecord {
    pub spec: String,
    pub identity: String,
    pub capabilities: Capabilities,
    pub inputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    /// Random binning and the failure-prediction split.
    pub analysis: u64,
    pub toy_init: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub analysis: Analysis,
    pub files: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub analysis: Analysis,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub analyses: Vec<(Analysis, f64)>,
    pub total_seconds: f64,
}

/// Everything needed to repeat a run. `timings` is the only part that
/// varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub version: String,
    pub command: String,
    pub config_file: Option<FileDigest>,
    /// Digest of `effective_config` as TOML.
    pub config_digest: String,
    pub effective_config: RunConfig,
    /// Digest over the dataset file digests, in order.
    pub dataset_digest: String,
    pub dataset_files: Vec<FileDigest>,
    pub adapter: AdapterRecord,
    pub seeds: Seeds,
    pub outputs: Vec<OutputRecord>,
    pub skipped: Vec<Skipped>,
    pub timings: Timings,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn read(path: &Path) -> Result<RunManifest, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Report(e.into()))
    }
}

pub fn dataset_digests(data_dir: &Path) -> Result<(String, Vec<FileDigest>), PipelineError> {
    let files = DatasetFiles::in_dir(data_dir);
    let digests = files
        .all()
        .into_iter()
        .map(|p| FileDigest::of_file(p, p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()))
        .collect::<Result<Vec<_>, _>>()?;
    let joined: String = digests.iter().map(|d| format!("{} {}\n", d.sha256, d.name)).collect();
    Ok((sha256_hex(joined.as_bytes()), digests))
}

/// What to run and how it was requested.
pub struct AnalyzeRequest<'a> {
    pub analyses: Vec<Analysis>,
    /// Skip analyses the adapter cannot serve instead of failing.
    pub skip_unsupported: bool,
    pub config: RunConfig,
    pub config_file: Option<(&'a Path, &'a [u8])>,
    pub command: String,
}

fn unsupported(e: &AnalysisError) -> bool {
    matches!(e, AnalysisError::Capability(_) | AnalysisError::Adapter(AdapterError::Capability { .. }))
}

/// Runs the requested analyses and writes reports, tables, charts and the
/// manifest into the configured output directory.
pub fn analyze(req: AnalyzeRequest) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    let cfg = req.config;
    cfg.validate()?;
    let data_dir = cfg.data.clone().ok_or_else(|| PipelineError::Usage("--data is required".into()))?;
    let out_dir = cfg.out.clone().ok_or_else(|| PipelineError::Usage("--out is required".into()))?;
    let spec: AdapterSpec = cfg.adapter.parse().map_err(PipelineError::Usage)?;

    let dataset = Dataset::load_dir(&data_dir)?;
    let (dataset_digest, dataset_files) = dataset_digests(&data_dir)?;
    let built = build_adapter(&spec, &dataset, &data_dir, &cfg)?;
    let mut session = Session::open(built.adapter)?.with_cache();

    let mut analyses = req.analyses;
    analyses.sort_unstable();
    analyses.dedup();
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    let mut timings = Vec::new();
    for a in analyses {
        let t = Instant::now();
        match run_analysis(a, &dataset, &mut session, &cfg) {
            Ok(r) => reports.push((a, r)),
            Err(e) if req.skip_unsupported && unsupported(&e) => {
                log::warn!("skipping {a}: {e}");
                skipped.push(Skipped { analysis: a, reason: e.to_string() });
            }
            Err(e) => return Err(e.into()),
        }
        timings.push((a, t.elapsed().as_secs_f64()));
    }

    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let mut outputs = Vec::new();
    for (a, r) in &reports {
        let artifacts = report::artifacts(r)?;
        report::write_artifacts(&out_dir, &artifacts)?;
        let files =
            artifacts.iter().map(|x| FileDigest { name: x.name.clone(), sha256: sha256_hex(&x.bytes) }).collect();
        outputs.push(OutputRecord { analysis: *a, files });
    }

    let mut effective = cfg.clone();
    effective.out = None;
    let manifest = RunManifest {
        toolkit: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: req.command,
        config_file: req
            .config_file
            .map(|(p, bytes)| FileDigest { name: p.display().to_string(), sha256: sha256_hex(bytes) }),
        config_digest: sha256_hex(effective.to_toml().as_bytes()),
        effective_config: effective,
        dataset_digest,
        dataset_files,
        adapter: AdapterRecord {
            spec: spec.to_string(),
            identity: session.identity(),
            capabilities: session.capabilities().clone(),
            inputs: built.inputs,
        },
        seeds: Seeds { analysis: cfg.seed, toy_init: cfg.toy.seed },
        outputs,
        skipped,
        timings: Timings { analyses: timings, total_seconds: started.elapsed().as_secs_f64() },
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, report::to_json(&manifest)?).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Predictions for every instance of `split` under each perturbation, in
/// instance order within each perturbation.
pub fn dump_predictions(
    dataset: &Dataset,
    session: &mut Session,
    perturbations: &[Perturbation],
    split: Option<Split>,
    want_embedding: bool,
) -> Result<DumpFile, PipelineError> {
    let instances: Vec<_> = dataset.instances.iter().filter(|i| split.is_none_or(|s| i.split == s)).collect();
    let mut rows = Vec::new();
    for &p in perturbations {
        let probes: Vec<Probe> = instances.iter().map(|i| Probe::new(i, p)).collect();
        rows.extend(session.predict(&probes, want_embedding)?.into_iter().map(DumpRow::from));
    }
    let dim = if want_embedding { session.capabilities().embedding_dim.unwrap_or(0) } else { 0 };
    Ok(DumpFile { dim, rows })
}

/// Charts for a saved report, written next to each other in `out_dir`.
pub fn render(report_path: &Path, out_dir: &Path) -> Result<Vec<String>, PipelineError> {
    let r = report::read_report(report_path)?;
    let charts = report::charts_for(&r);
    if charts.is_empty() {
        return Err(PipelineError::Usage(format!("{} reports have no chart", r.name())));
    }
    let artifacts = charts
        .iter()
        .map(|(name, spec)| {
            Ok(report::Artifact { name: format!("{name}.svg"), bytes: report::render_svg(spec)?.into_bytes() })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    Ok(report::write_artifacts(out_dir, &artifacts)?)
}
