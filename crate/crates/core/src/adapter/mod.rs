//! Uniform access to the model under test.
//!
//! An [`Adapter`] answers batches of [`Probe`]s. Implementations here cover
//! the in-process toy model, a recorded prediction dump, an external process
//! speaking the line-delimited JSON protocol in [`wire`], and a few fixed
//! test doubles. [`Session`] wraps an adapter with its handshake result and
//! enforces capability and ordering contracts.

mod dump;
mod exec;
mod probe;
mod toy;
pub mod wire;

use std::collections::HashMap;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knn::Metric;

pub use dump::{format_dump, parse_dump, read_dump, write_dump, DumpAdapter, DumpFile, DumpRow};
pub use exec::ExecAdapter;
pub use probe::{prefix_len, Override, Perturbation, Probe, ProbeKind};
pub use toy::{
    mean_feature, train_toy, Example, Hyperparams, Modality, ToyAdapter, ToyError, ToyModel, TrainingSet,
};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("adapter unreachable: {0}")]
    Unreachable(String),
    #[error("malformed handshake: {0}")]
    MalformedHandshake(String),
    #[error("probe {probe_id} for instance {instance_id} exceeds adapter capabilities: {reason}")]
    Capability { instance_id: String, probe_id: String, reason: String },
    #[error("adapter failed mid-batch after {completed} of {total} predictions: {message}")]
    Crashed { completed: usize, total: usize, message: String },
    #[error("dump has no row for instance {instance_id}, probe {probe_id}")]
    DumpMiss { instance_id: String, probe_id: String },
    #[error("dump line {line}: {message}")]
    DumpFormat { line: usize, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unknown image {0}")]
    UnknownImage(String),
    #[error("unknown instance {0}")]
    UnknownInstance(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AdapterError {
    /// Index of the last prediction that completed before a crash, if any.
    pub fn last_good_index(&self) -> Option<usize> {
        match self {
            AdapterError::Crashed { completed, .. } if *completed > 0 => Some(completed - 1),
            _ => None,
        }
    }
}

fn yes() -> bool {
    true
}

/// What an adapter can do, as declared in its handshake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub has_embedding: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    pub supports_mean_image: bool,
    pub supports_mean_question: bool,
    pub preferred_metric: Metric,
    /// Absent in a handshake means supported; dumps derive it from their rows.
    #[serde(default = "yes")]
    pub supports_prefix: bool,
    #[serde(default = "yes")]
    pub supports_pos_drop: bool,
}

impl Capabilities {
    pub fn validate(&self) -> Result<(), AdapterError> {
        match (self.has_embedding, self.embedding_dim) {
            (true, None) => Err(AdapterError::MalformedHandshake("has_embedding=true but embedding_dim is absent".into())),
            (true, Some(0)) => Err(AdapterError::MalformedHandshake("embedding_dim must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn supports(&self, kind: ProbeKind) -> bool {
        match kind {
            ProbeKind::Full => true,
            ProbeKind::Prefix => self.supports_prefix,
            ProbeKind::Drop => self.supports_pos_drop,
            ProbeKind::ImageMean => self.supports_mean_image,
            ProbeKind::QuestionMean => self.supports_mean_question,
            ProbeKind::BothMean => self.supports_mean_image && self.supports_mean_question,
        }
    }

    pub fn check_probe(&self, probe: &Probe) -> Result<(), AdapterError> {
        let fail = |reason: String| AdapterError::Capability {
            instance_id: probe.instance_id.clone(),
            probe_id: probe.probe_id.clone(),
            reason,
        };
        let p = probe.perturbation().map_err(fail)?;
        if p.image_override() != probe.image_override || p.question_override() != probe.question_override {
            return Err(fail("overrides disagree with the probe id".into()));
        }
        if probe.image_override == Override::Mean && !self.supports_mean_image {
            return Err(fail("mean image substitution not supported".into()));
        }
        if probe.question_override == Override::Mean && !self.supports_mean_question {
            return Err(fail("mean question substitution not supported".into()));
        }
        if !self.supports(p.kind()) {
            return Err(fail(format!("{:?} probes not supported", p.kind())));
        }
        Ok(())
    }
}

/// Model output for one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub probe_id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

pub trait Adapter: Send {
    /// Human-readable identity recorded in run manifests.
    fn identity(&self) -> String;

    fn handshake(&mut self) -> Result<Capabilities, AdapterError>;

    /// One prediction per probe, in probe order. Callers go through
    /// [`Session::predict`], which checks capabilities first.
    fn predict(&mut self, probes: &[Probe], want_embedding: bool) -> Result<Vec<Prediction>, AdapterError>;
}

/// Checked prediction: capability violations are rejected before the adapter
/// sees the batch, and the result is verified to line up with the probes.
pub fn predict_batch(
    adapter: &mut dyn Adapter,
    caps: &Capabilities,
    probes: &[Probe],
    want_embedding: bool,
) -> Result<Vec<Prediction>, AdapterError> {
    for p in probes {
        caps.check_probe(p)?;
    }
    if probes.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = adapter.predict(probes, want_embedding)?;
    if out.len() != probes.len() {
        return Err(AdapterError::Protocol(format!("{} predictions for {} probes", out.len(), probes.len())));
    }
    let want = want_embedding && caps.has_embedding;
    for (p, pred) in probes.iter().zip(out.iter_mut()) {
        if p.instance_id != pred.instance_id || p.probe_id != pred.probe_id {
            return Err(AdapterError::Protocol(format!(
                "prediction ({}, {}) answers probe ({}, {})",
                pred.instance_id, pred.probe_id, p.instance_id, p.probe_id
            )));
        }
        if !want {
            pred.embedding = None;
            continue;
        }
        match &pred.embedding {
            Some(e) if Some(e.len()) == caps.embedding_dim => {}
            Some(e) => {
                return Err(AdapterError::Protocol(format!(
                    "embedding of dimension {} for ({}, {}), expected {:?}",
                    e.len(),
                    p.instance_id,
                    p.probe_id,
                    caps.embedding_dim
                )))
            }
            None => {
                return Err(AdapterError::Protocol(format!(
                    "missing embedding for ({}, {})",
                    p.instance_id, p.probe_id
                )))
            }
        }
    }
    Ok(out)
}

/// An adapter plus its capabilities, with an optional prediction cache so
/// several analyses can share one set of model calls.
pub struct Session {
    adapter: Box<dyn Adapter>,
    caps: Capabilities,
    cache: Option<HashMap<(String, String), Prediction>>,
}

impl Session {
    pub fn open(mut adapter: Box<dyn Adapter>) -> Result<Session, AdapterError> {
        let caps = adapter.handshake()?;
        caps.validate()?;
        Ok(Session { adapter, caps, cache: None })
    }

    /// Reuse predictions for repeated `(instance_id, probe_id)` requests.
    /// Only valid for deterministic adapters.
    pub fn with_cache(mut self) -> Session {
        self.cache = Some(HashMap::new());
        self
    }

    pub fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    pub fn identity(&self) -> String {
        self.adapter.identity()
    }

    pub fn predict(&mut self, probes: &[Probe], want_embedding: bool) -> Result<Vec<Prediction>, AdapterError> {
        let want = want_embedding && self.caps.has_embedding;
        let Some(cache) = self.cache.as_mut() else {
            return predict_batch(self.adapter.as_mut(), &self.caps, probes, want_embedding);
        };
        let usable = |p: &Prediction| !want || p.embedding.is_some();
        let missing: Vec<Probe> = probes
            .iter()
            .filter(|p| {
                !cache.get(&(p.instance_id.clone(), p.probe_id.clone())).is_some_and(usable)
            })
            .cloned()
            .collect();
        let fresh = predict_batch(self.adapter.as_mut(), &self.caps, &missing, want_embedding)?;
        for pred in fresh {
            cache.insert((pred.instance_id.clone(), pred.probe_id.clone()), pred);
        }
        probes
            .iter()
            .map(|p| {
                let mut pred = cache[&(p.instance_id.clone(), p.probe_id.clone())].clone();
                if !want {
                    pred.embedding = None;
                }
                Ok(pred)
            })
            .collect()
    }
}

/// Several single-consumer adapters serving one batch in parallel. The batch
/// is cut into contiguous chunks, one per worker, and reassembled in order.
pub struct PooledAdapter {
    workers: Vec<Box<dyn Adapter>>,
}

impl PooledAdapter {
    pub fn new(workers: Vec<Box<dyn Adapter>>) -> Self {
        assert!(!workers.is_empty(), "a pool needs at least one worker");
        PooledAdapter { workers }
    }
}

impl Adapter for PooledAdapter {
    fn identity(&self) -> String {
        format!("{} x{}", self.workers[0].identity(), self.workers.len())
    }

    fn handshake(&mut self) -> Result<Capabilities, AdapterError> {
        let mut caps = Vec::with_capacity(self.workers.len());
        for w in &mut self.workers {
            caps.push(w.handshake()?);
        }
        if caps.windows(2).any(|w| w[0] != w[1]) {
            return Err(AdapterError::MalformedHandshake("pool workers declared different capabilities".into()));
        }
        Ok(caps.swap_remove(0))
    }

    fn predict(&mut self, probes: &[Probe], want_embedding: bool) -> Result<Vec<Prediction>, AdapterError> {
        let chunk = probes.len().div_ceil(self.workers.len()).max(1);
        let results: Vec<Result<Vec<Prediction>, AdapterError>> = thread::scope(|s| {
            let handles: Vec<_> = self
                .workers
                .iter_mut()
                .zip(probes.chunks(chunk))
                .map(|(w, part)| s.spawn(move || w.predict(part, want_embedding)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("pool worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(probes.len());
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(preds) => out.extend(preds),
                Err(AdapterError::Crashed { completed, message, .. }) => {
                    return Err(AdapterError::Crashed {
                        completed: i * chunk + completed,
                        total: probes.len(),
                        message,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

/// Answers the same string for every probe. Useful as a maximally stubborn
/// baseline.
#[derive(Debug, Clone)]
pub struct ConstantAdapter {
    pub answer: String,
}

impl ConstantAdapter {
    pub fn new(answer: impl Into<String>) -> Self {
        ConstantAdapter { answer: answer.into() }
    }
}

impl Adapter for ConstantAdapter {
    fn identity(&self) -> String {
        format!("const:{}", self.answer)
    }

    fn handshake(&mut self) -> Result<Capabilities, AdapterError> {
        Ok(Capabilities {
            has_embedding: false,
            embedding_dim: None,
            supports_mean_image: true,
            supports_mean_question: true,
            preferred_metric: Metric::Euclidean,
            supports_prefix: true,
            supports_pos_drop: true,
        })
    }

    fn predict(&mut self, probes: &[Probe], _want_embedding: bool) -> Result<Vec<Prediction>, AdapterError> {
        Ok(probes
            .iter()
            .map(|p| Prediction {
                instance_id: p.instance_id.clone(),
                probe_id: p.probe_id.clone(),
                answer: self.answer.clone(),
                embedding: None,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Instance, Split};

    fn probe(id: &str, p: Perturbation) -> Probe {
        let inst = Instance::new(
            id,
            "what is it",
            vec!["what".into(), "is".into(), "it".into()],
            None,
            "img0",
            vec!["red".into()],
            "red",
            Split::Test,
        )
        .unwrap();
        Probe::new(&inst, p)
    }

    struct NoMeans;

    impl Adapter for NoMeans {
        fn identity(&self) -> String {
            "no-means".into()
        }
        fn handshake(&mut self) -> Result<Capabilities, AdapterError> {
            Ok(Capabilities {
                supports_mean_image: false,
                supports_mean_question: false,
                ..ConstantAdapter::new("x").handshake()?
            })
        }
        fn predict(&mut self, probes: &[Probe], w: bool) -> Result<Vec<Prediction>, AdapterError> {
            ConstantAdapter::new("x").predict(probes, w)
        }
    }

    #[test]
    fn empty_batch_gives_empty_predictions() {
        let mut s = Session::open(Box::new(ConstantAdapter::new("a"))).unwrap();
        assert!(s.predict(&[], false).unwrap().is_empty());
    }

    #[test]
    fn mean_image_without_support_is_a_capability_error() {
        let mut s = Session::open(Box::new(NoMeans)).unwrap();
        let err = s.predict(&[probe("i0", Perturbation::Full), probe("i1", Perturbation::ImageMean)], false);
        match err {
            Err(AdapterError::Capability { instance_id, probe_id, .. }) => {
                assert_eq!((instance_id.as_str(), probe_id.as_str()), ("i1", "img:mean"));
            }
            other => panic!("expected capability error, got {other:?}"),
        }
    }

    #[test]
    fn embedding_dim_required_when_embedding_declared() {
        let caps = Capabilities { has_embedding: true, ..ConstantAdapter::new("x").handshake().unwrap() };
        assert!(matches!(caps.validate(), Err(AdapterError::MalformedHandshake(_))));
    }

    #[test]
    fn pooled_batches_are_reassembled_in_order() {
        let workers: Vec<Box<dyn Adapter>> =
            (0..3).map(|_| Box::new(ConstantAdapter::new("z")) as Box<dyn Adapter>).collect();
        let mut s = Session::open(Box::new(PooledAdapter::new(workers))).unwrap();
        let probes: Vec<Probe> = (0..10).map(|i| probe(&format!("i{i}"), Perturbation::Prefix(i * 10))).collect();
        let out = s.predict(&probes, false).unwrap();
        let ids: Vec<(&str, &str)> = out.iter().map(|p| (p.instance_id.as_str(), p.probe_id.as_str())).collect();
        let want: Vec<(&str, &str)> = probes.iter().map(|p| (p.instance_id.as_str(), p.probe_id.as_str())).collect();
        assert_eq!(ids, want);
    }
}
