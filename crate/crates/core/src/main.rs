use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qaprobe::adapter::{train_toy, wire, write_dump, Perturbation, Session, TrainingSet};
use qaprobe::config::{Overrides, RunConfig};
use qaprobe::data::{Dataset, QuestionType, Split};
use qaprobe::knn::Metric;
use qaprobe::pipeline::{self, Analysis, AnalyzeRequest, PipelineError};
use qaprobe::synth::{self, Mode};

#[derive(Parser)]
#[command(name = "qaprobe", version, about = "Behavioral diagnostics for visual question answering models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted structure.
    Gen(GenArgs),
    /// Train the toy model on a dataset's train split and save it.
    TrainToy(TrainArgs),
    /// Record an adapter's predictions over a probe plan.
    Dump(DumpArgs),
    /// Run one analysis, or all of them.
    Analyze(AnalyzeArgs),
    /// Redraw the charts of a saved report.
    Render(RenderArgs),
    /// Serve an adapter over stdin/stdout with the line protocol.
    Serve(ServeArgs),
}

#[derive(Args, Default)]
struct Common {
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// toy | toy:<file> | exec:<cmd> | dump:<file> | const:<answer> | oracle
    #[arg(long)]
    adapter: Option<String>,
    #[arg(long)]
    metric: Option<Metric>,
    /// Comma-separated neighbor counts.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    qtype: Option<QuestionType>,
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    /// TOML config file; flags win over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parallel adapter processes for exec adapters.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            data: self.data.clone(),
            adapter: self.adapter.clone(),
            out: self.out.clone(),
            metric: self.metric,
            k: self.k.clone(),
            seed: self.seed,
            qtype: self.qtype,
            workers: self.workers,
        }
    }

    /// Merged config plus the raw config file, if one was given.
    fn load(&self) -> Result<(RunConfig, Option<Vec<u8>>), PipelineError> {
        let (mut cfg, bytes) = match &self.config {
            Some(path) => {
                let (cfg, bytes) = RunConfig::read(path)?;
                (cfg, Some(bytes))
            }
            None => (RunConfig::default(), None),
        };
        cfg.apply(self.overrides());
        cfg.validate()?;
        Ok((cfg, bytes))
    }
}

#[derive(Args)]
struct GenArgs {
    /// Planted mode; repeat or comma-separate to combine.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// TOML config file; its [synth] table is used.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model file to write.
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated probe ids, e.g. full,prefix:50,img:mean
    #[arg(long, value_delimiter = ',', default_value = "full")]
    probes: Vec<Perturbation>,
    /// Restrict to one split.
    #[arg(long)]
    split: Option<SplitArg>,
    /// Record joint embeddings.
    #[arg(long)]
    embed: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(value_parser = ["novelty", "answer-novelty", "failure", "question", "pos", "image", "ablation", "all"])]
    which: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RenderArgs {
    /// Report JSON written by `analyze`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, PipelineError> {
    v.as_deref().ok_or_else(|| PipelineError::Usage(format!("{flag} is required")))
}

fn open_session(cfg: &RunConfig) -> Result<(Dataset, Session), PipelineError> {
    let data = require(&cfg.data, "--data")?;
    let dataset = Dataset::load_dir(data)?;
    let spec = cfg.adapter.parse().map_err(PipelineError::Usage)?;
    let built = pipeline::build_adapter(&spec, &dataset, data, cfg)?;
    Ok((dataset, Session::open(built.adapter)?))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Gen(a) => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::read(p)?.0.synth,
                None => Default::default(),
            };
            cfg.modes.extend(a.mode.iter().copied());
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(n) = a.n_train {
                cfg.n_train = n;
            }
            if let Some(n) = a.n_test {
                cfg.n_test = n;
            }
            let (dataset, plant) = synth::generate(&cfg)?;
            synth::write_generated(&a.out, &dataset, &plant)?;
            println!("wrote {} instances to {}", dataset.instances.len(), a.out.display());
        }
        Command::TrainToy(a) => {
            let mut hp = match &a.config {
                Some(p) => RunConfig::read(p)?.0.toy,
                None => Default::default(),
            };
            if let Some(s) = a.seed {
                hp.seed = s;
            }
            if let Some(e) = a.epochs {
                hp.epochs = e;
            }
            if let Some(lr) = a.learning_rate {
                hp.learning_rate = lr;
            }
            let dataset = Dataset::load_dir(&a.data)?;
            let model = train_toy(&dataset, hp)?;
            let acc = TrainingSet::from_dataset(&dataset)?.accuracy(&model);
            model.save(&a.out)?;
            println!("train accuracy {acc:.4}; model written to {}", a.out.display());
        }
        Command::Dump(a) => {
            let (cfg, _) = a.common.load()?;
            let out = require(&cfg.out, "--out")?.to_path_buf();
            let (dataset, mut session) = open_session(&cfg)?;
            let split = a.split.map(|s| match s {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            });
            let dump = pipeline::dump_predictions(&dataset, &mut session, &a.probes, split, a.embed)?;
            write_dump(&out, &dump)?;
            println!("wrote {} rows to {}", dump.rows.len(), out.display());
        }
        Command::Analyze(a) => {
            let (analyses, all) = if a.which == "all" {
                (Analysis::ALL.to_vec(), true)
            } else {
                (vec![a.which.parse().map_err(PipelineError::Usage)?], false)
            };
            let (cfg, bytes) = a.common.load()?;
            let manifest = pipeline::analyze(AnalyzeRequest {
                analyses,
                skip_unsupported: all,
                config: cfg,
                config_file: a.common.config.as_deref().zip(bytes.as_deref()),
                command: format!("analyze {}", a.which),
            })?;
            for o in &manifest.outputs {
                for f in &o.files {
                    println!("{}", f.name);
                }
            }
            for s in &manifest.skipped {
                println!("skipped {}: {}", s.analysis, s.reason);
            }
        }
        Command::Render(a) => {
            for name in pipeline::render(&a.report, &a.out)? {
                println!("{name}");
            }
        }
        Command::Serve(a) => {
            let (cfg, _) = a.common.load()?;
            let data = require(&cfg.data, "--data")?;
            let dataset = Dataset::load_dir(data)?;
            let spec = cfg.adapter.parse().map_err(PipelineError::Usage)?;
            let mut built = pipeline::build_adapter(&spec, &dataset, data, &cfg)?;
            let stdin = io::stdin();
            wire::serve(built.adapter.as_mut(), BufReader::new(stdin.lock()), io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
