//! The behavioral analyses. Each one drives a [`Session`] over a dataset's
//! test split and returns a plain serializable report.

mod ablation;
mod consistency;
mod failure;
mod novelty;
mod probes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{AdapterError, Perturbation, Prediction, Probe, Session};
use crate::data::{accuracy, normalize_answer, AccuracyMode, Dataset, Instance, QuestionType};
use crate::knn::KnnError;
use crate::stats::DEFAULT_BIN_SIZE;

pub use ablation::{modality_ablation, ModalityAblationReport};
pub use consistency::{image_consistency, ConsistencyParams, ImageConsistencyReport, QuestionGroup};
pub use failure::{
    failure_analysis, failure_prediction, failure_prediction_min, is_failure, FailureFeature, FailurePredictionReport,
    MIN_FAILURE_INSTANCES,
};
pub use novelty::{answer_novelty_analysis, novelty_analysis, KRow, NoveltyFeature, NoveltyPoint, NoveltyReport};
pub use probes::{
    pos_drop_probe, prefix_probe, GroupRow, PosDropBreakdown, PosDropReport, PrefixBreakdown, PrefixPoint,
    QuestionUnderstandingReport, DEFAULT_PREFIX_GRID,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("capability missing: {0}")]
    Capability(String),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error("no test instances{0}")]
    NoTestInstances(String),
    #[error("no train instances")]
    NoTrainInstances,
    #[error("{0}")]
    Invalid(String),
}

/// Settings shared by every analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub accuracy: AccuracyMode,
    /// Restrict the test split to one question type.
    pub qtype: Option<QuestionType>,
    pub bin_size: usize,
    pub bin_seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { accuracy: AccuracyMode::Consensus, qtype: None, bin_size: DEFAULT_BIN_SIZE, bin_seed: 0 }
    }
}

impl AnalysisOptions {
    pub fn test_instances<'d>(&self, dataset: &'d Dataset) -> Result<Vec<&'d Instance>, AnalysisError> {
        let test: Vec<&Instance> =
            dataset.test().into_iter().filter(|i| self.qtype.is_none_or(|q| i.question_type() == q)).collect();
        if test.is_empty() {
            let why = self.qtype.map(|q| format!(" of type {q}")).unwrap_or_default();
            return Err(AnalysisError::NoTestInstances(why));
        }
        Ok(test)
    }

    pub fn accuracy_of(&self, answer: &str, inst: &Instance) -> f64 {
        accuracy(answer, &inst.annotator_answers, self.accuracy)
    }
}

/// Every report the toolkit produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Novelty(NoveltyReport),
    AnswerNovelty(NoveltyReport),
    Failure(FailurePredictionReport),
    Question(QuestionUnderstandingReport),
    Pos(PosDropReport),
    Image(ImageConsistencyReport),
    Ablation(ModalityAblationReport),
}

impl Report {
    /// Stem for output files.
    pub fn name(&self) -> &'static str {
        match self {
            Report::Novelty(_) => "novelty",
            Report::AnswerNovelty(_) => "answer_novelty",
            Report::Failure(_) => "failure",
            Report::Question(_) => "question",
            Report::Pos(_) => "pos",
            Report::Image(_) => "image",
            Report::Ablation(_) => "ablation",
        }
    }
}

pub(crate) fn same_answer(a: &str, b: &str) -> bool {
    normalize_answer(a) == normalize_answer(b)
}

pub(crate) fn probes(instances: &[&Instance], p: Perturbation) -> Vec<Probe> {
    instances.iter().map(|i| Probe::new(i, p)).collect()
}

pub(crate) fn predict(
    session: &mut Session,
    instances: &[&Instance],
    p: Perturbation,
    want_embedding: bool,
) -> Result<Vec<Prediction>, AnalysisError> {
    Ok(session.predict(&probes(instances, p), want_embedding)?)
}

/// Per-qtype partition of `instances`, in canonical type order, skipping
/// empty types.
pub(crate) fn by_qtype<'a, 'd>(instances: &'a [&'d Instance]) -> Vec<(QuestionType, Vec<usize>)> {
    QuestionType::ALL
        .into_iter()
        .map(|q| (q, instances.iter().enumerate().filter(|(_, i)| i.question_type() == q).map(|(n, _)| n).collect::<Vec<_>>()))
        .filter(|(_, idx)| !idx.is_empty())
        .collect()
}

pub(crate) fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub(crate) fn mean_or_none(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
