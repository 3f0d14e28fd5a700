//! C ABI for qaprobe.
//!
//! Every fallible call returns a [`QpStatus`]; on failure the message is
//! available from [`qp_last_error`] on the same thread. Datasets and models
//! are opaque handles released with their `_free` function. Strings handed
//! out by the library are released with [`qp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::Arc;

use qaprobe::adapter::{
    train_toy, Adapter, AdapterError, Hyperparams, Perturbation, Probe, Session, ToyAdapter, ToyModel,
};
use qaprobe::analysis::AnalysisError;
use qaprobe::config::RunConfig;
use qaprobe::data::{Dataset, Split, VectorTable};
use qaprobe::knn::{self, Metric, TrainMatrix};
use qaprobe::pipeline::{self, Analysis, PipelineError};
use qaprobe::report;
use qaprobe::stats;
use qaprobe::synth::{self, PlantDescriptor, SynthConfig, PLANT_FILE};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Adapter = 5,
    Capability = 6,
    Analysis = 7,
    /// Output buffer too small; the required length is still written.
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpMetric {
    Euclidean = 0,
    Cosine = 1,
}

fn metric_arg(m: i32) -> Result<Metric, Failure> {
    match m {
        x if x == QpMetric::Euclidean as i32 => Ok(Metric::Euclidean),
        x if x == QpMetric::Cosine as i32 => Ok(Metric::Cosine),
        _ => Err(Failure::new(QpStatus::InvalidArgument, format!("unknown metric {m}"))),
    }
}

/// A loaded or generated dataset.
pub struct QpDataset {
    dataset: Dataset,
    images: Arc<VectorTable>,
    plant: Option<PlantDescriptor>,
}

/// A trained toy model.
pub struct QpModel {
    model: Arc<ToyModel>,
}

struct Failure {
    status: QpStatus,
    message: String,
}

impl Failure {
    fn new(status: QpStatus, message: impl Into<String>) -> Failure {
        Failure { status, message: message.into() }
    }
}

fn adapter_status(e: &AdapterError) -> QpStatus {
    match e {
        AdapterError::Capability { .. } => QpStatus::Capability,
        AdapterError::Io(_) => QpStatus::Io,
        _ => QpStatus::Adapter,
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Failure {
        let status = match &e {
            PipelineError::Config(_) | PipelineError::Usage(_) => QpStatus::InvalidArgument,
            PipelineError::Data(_) | PipelineError::Synth(_) => QpStatus::Data,
            PipelineError::Adapter(a) | PipelineError::Analysis(AnalysisError::Adapter(a)) => adapter_status(a),
            PipelineError::Analysis(AnalysisError::Capability(_)) => QpStatus::Capability,
            PipelineError::Analysis(_) | PipelineError::Report(_) | PipelineError::Toy(_) => QpStatus::Analysis,
            PipelineError::Io { .. } => QpStatus::Io,
        };
        Failure::new(status, e.to_string())
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Failure {
                Failure::from(PipelineError::from(e))
            }
        }
    )*};
}

failure_from!(
    qaprobe::data::DataError,
    qaprobe::synth::SynthError,
    qaprobe::adapter::ToyError,
    AdapterError,
    AnalysisError,
    qaprobe::config::ConfigError,
    qaprobe::report::ReportError
);

impl From<knn::KnnError> for Failure {
    fn from(e: knn::KnnError) -> Failure {
        Failure::new(QpStatus::InvalidArgument, e.to_string())
    }
}

impl From<stats::StatsError> for Failure {
    fn from(e: stats::StatsError) -> Failure {
        Failure::new(QpStatus::Analysis, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QpStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            QpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(QpStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid nul-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::new(QpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `out` must be null or writable.
unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(QpStatus::Analysis, "string contains a nul byte"))
}

/// Library version as a static string. Never free it.
#[no_mangle]
pub extern "C" fn qp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn qp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn dataset_handle(dataset: Dataset, plant: Option<PlantDescriptor>) -> *mut QpDataset {
    let images = Arc::new(dataset.image_features.clone());
    Box::into_raw(Box::new(QpDataset { dataset, images, plant }))
}

/// Loads a dataset directory. A plant descriptor next to it is picked up.
///
/// # Safety
/// `dir` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_load(dir: *const c_char, out: *mut *mut QpDataset) -> QpStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let dataset = Dataset::load_dir(&dir)?;
        let plant_path = dir.join(PLANT_FILE);
        let plant = if plant_path.exists() { Some(PlantDescriptor::read(&plant_path)?) } else { None };
        write_out(out, dataset_handle(dataset, plant), "out")
    })
}

/// Generates a synthetic dataset from a TOML synth config (the keys of the
/// `[synth]` table, at top level). Null or empty text uses the defaults.
///
/// # Safety
/// `config_toml` must be null or nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_generate(config_toml: *const c_char, out: *mut *mut QpDataset) -> QpStatus {
    guard(|| {
        let cfg: SynthConfig = if config_toml.is_null() {
            SynthConfig::default()
        } else {
            let text = str_arg(config_toml, "config_toml")?;
            let wrapped = format!("[synth]\n{text}");
            RunConfig::parse(Path::new("<synth config>"), &wrapped)?.synth
        };
        let (dataset, plant) = synth::generate(&cfg)?;
        write_out(out, dataset_handle(dataset, Some(plant)), "out")
    })
}

/// Writes the dataset, and its plant if any, into `dir`.
///
/// # Safety
/// `dataset` must be a live handle and `dir` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_write(dataset: *const QpDataset, dir: *const c_char) -> QpStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let dir = Path::new(str_arg(dir, "dir")?);
        match &d.plant {
            Some(p) => synth::write_generated(dir, &d.dataset, p)?,
            None => {
                d.dataset.write_dir(dir)?;
            }
        }
        Ok(())
    })
}

/// Number of train and test instances.
///
/// # Safety
/// `dataset` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_counts(
    dataset: *const QpDataset,
    n_train: *mut usize,
    n_test: *mut usize,
) -> QpStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let count = |s| d.dataset.instances.iter().filter(|i| i.split == s).count();
        write_out(n_train, count(Split::Train), "n_train")?;
        write_out(n_test, count(Split::Test), "n_test")
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_free(dataset: *mut QpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains the toy model on the dataset's train split.
///
/// # Safety
/// `dataset` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qp_model_train(
    dataset: *const QpDataset,
    seed: u64,
    epochs: usize,
    learning_rate: f64,
    out: *mut *mut QpModel,
) -> QpStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if epochs == 0 || !(learning_rate > 0.0) {
            return Err(Failure::new(QpStatus::InvalidArgument, "epochs and learning_rate must be positive"));
        }
        let hp = Hyperparams { seed, epochs, learning_rate, ..Hyperparams::default() };
        let model = train_toy(&d.dataset, hp)?;
        write_out(out, Box::into_raw(Box::new(QpModel { model: Arc::new(model) })), "out")
    })
}

/// # Safety
/// `path` must be nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qp_model_load(path: *const c_char, out: *mut *mut QpModel) -> QpStatus {
    guard(|| {
        let model = ToyModel::load(Path::new(str_arg(path, "path")?))?;
        write_out(out, Box::into_raw(Box::new(QpModel { model: Arc::new(model) })), "out")
    })
}

/// # Safety
/// `model` must be a live handle and `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn qp_model_save(model: *const QpModel, path: *const c_char) -> QpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        m.model.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Joint-embedding width of the model.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qp_model_embedding_dim(model: *const QpModel, out: *mut usize) -> QpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        write_out(out, m.model.input_dim(), "out")
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_model_free(model: *mut QpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Answers one probe of a dataset instance. `probe_id` uses the probe
/// encoding (`full`, `prefix:50`, `drop:WH`, `img:mean`, ...). The answer is
/// returned as a new string. When `embedding` is non-null, up to
/// `embedding_cap` components are written and `embedding_len` receives the
/// full width; a short buffer yields `BufferTooSmall`.
///
/// # Safety
/// Handles must be live, strings nul-terminated, `answer` writable, and
/// `embedding` null or valid for `embedding_cap` writes.
#[no_mangle]
pub unsafe extern "C" fn qp_model_predict(
    model: *const QpModel,
    dataset: *const QpDataset,
    instance_id: *const c_char,
    probe_id: *const c_char,
    answer: *mut *mut c_char,
    embedding: *mut f64,
    embedding_cap: usize,
    embedding_len: *mut usize,
) -> QpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let id = str_arg(instance_id, "instance_id")?;
        let perturbation: Perturbation =
            str_arg(probe_id, "probe_id")?.parse().map_err(|e: String| Failure::new(QpStatus::InvalidArgument, e))?;
        let inst = d
            .dataset
            .instance(id)
            .ok_or_else(|| Failure::new(QpStatus::InvalidArgument, format!("unknown instance {id:?}")))?;
        if answer.is_null() {
            return Err(null("answer"));
        }
        let mut adapter = ToyAdapter::new(m.model.clone(), d.images.clone())?;
        let want = !embedding.is_null();
        let mut preds = adapter.predict(&[Probe::new(inst, perturbation)], want)?;
        let pred = preds.pop().expect("one prediction per probe");
        if let Some(v) = pred.embedding.filter(|_| want) {
            if !embedding_len.is_null() {
                embedding_len.write(v.len());
            }
            if v.len() > embedding_cap {
                return Err(Failure::new(
                    QpStatus::BufferTooSmall,
                    format!("embedding needs {} slots, got {embedding_cap}", v.len()),
                ));
            }
            ptr::copy_nonoverlapping(v.as_ptr(), embedding, v.len());
        }
        answer.write(into_c_string(pred.answer)?);
        Ok(())
    })
}

/// Runs one analysis and returns its report as JSON. `analysis` is one of
/// `novelty`, `answer-novelty`, `failure`, `question`, `pos`, `image`,
/// `ablation`. With a null `model`, the adapter named in the config is used
/// (`toy` by default). `config_toml` holds run-config keys and may be null.
///
/// # Safety
/// `dataset` must be live, `model` null or live, strings null or
/// nul-terminated where allowed, and `json_out` writable.
#[no_mangle]
pub unsafe extern "C" fn qp_analyze(
    dataset: *const QpDataset,
    model: *const QpModel,
    analysis: *const c_char,
    config_toml: *const c_char,
    json_out: *mut *mut c_char,
) -> QpStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let which: Analysis =
            str_arg(analysis, "analysis")?.parse().map_err(|e: String| Failure::new(QpStatus::InvalidArgument, e))?;
        let cfg = if config_toml.is_null() {
            RunConfig::default()
        } else {
            RunConfig::parse(Path::new("<config>"), str_arg(config_toml, "config_toml")?)?
        };
        cfg.validate()?;
        if json_out.is_null() {
            return Err(null("json_out"));
        }
        let adapter: Box<dyn Adapter> = match model.as_ref() {
            Some(m) => Box::new(ToyAdapter::new(m.model.clone(), d.images.clone())?),
            None => {
                let spec: pipeline::AdapterSpec =
                    cfg.adapter.parse().map_err(|e: String| Failure::new(QpStatus::InvalidArgument, e))?;
                match (&spec, &d.plant) {
                    (pipeline::AdapterSpec::Oracle, Some(plant)) => synth::oracle_for(&d.dataset, plant)?,
                    (pipeline::AdapterSpec::Oracle, None) => {
                        return Err(Failure::new(QpStatus::InvalidArgument, "dataset has no plant descriptor"))
                    }
                    _ => pipeline::build_adapter(&spec, &d.dataset, Path::new("."), &cfg)?.adapter,
                }
            }
        };
        let mut session = Session::open(adapter)?.with_cache();
        let report = pipeline::run_analysis(which, &d.dataset, &mut session, &cfg)?;
        json_out.write(into_c_string(report::to_json(&report)?)?);
        Ok(())
    })
}

/// Distance between two `dim`-vectors. `metric` is a `QpMetric` value.
///
/// # Safety
/// `u` and `v` must hold `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_distance(
    u: *const f64,
    v: *const f64,
    dim: usize,
    metric: i32,
    out: *mut f64,
) -> QpStatus {
    guard(|| {
        let d = knn::distance(slice_arg(u, dim, "u")?, slice_arg(v, dim, "v")?, metric_arg(metric)?)?;
        write_out(out, d, "out")
    })
}

/// Exact k nearest rows of a row-major `n x dim` matrix. Writes
/// `min(k, n)` indices and distances, nearest first, and that count to
/// `found`. `metric` is a `QpMetric` value.
///
/// # Safety
/// `train` must hold `n * dim` values, `query` `dim` values, and both
/// outputs room for `k` values.
#[no_mangle]
pub unsafe extern "C" fn qp_knn(
    train: *const f64,
    n: usize,
    dim: usize,
    query: *const f64,
    k: usize,
    metric: i32,
    indices: *mut usize,
    distances: *mut f64,
    found: *mut usize,
) -> QpStatus {
    guard(|| {
        if dim == 0 {
            return Err(Failure::new(QpStatus::InvalidArgument, "dim must be positive"));
        }
        let rows = slice_arg(train, n.checked_mul(dim).ok_or_else(|| Failure::new(QpStatus::InvalidArgument, "n * dim overflows"))?, "train")?;
        let matrix = TrainMatrix::from_rows(dim, rows.chunks(dim))?;
        let list = knn::knn(slice_arg(query, dim, "query")?, &matrix, k, metric_arg(metric)?)?;
        if indices.is_null() || distances.is_null() {
            return Err(null("indices or distances"));
        }
        for (i, nb) in list.neighbors.iter().enumerate() {
            indices.add(i).write(nb.train_index);
            distances.add(i).write(nb.distance);
        }
        write_out(found, list.neighbors.len(), "found")
    })
}

/// Pearson correlation of two length-`n` series. Zero variance is an
/// `Analysis` error.
///
/// # Safety
/// `x` and `y` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qp_pearson(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> QpStatus {
    guard(|| {
        let r = stats::pearson(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?)?;
        write_out(out, r, "out")
    })
}
