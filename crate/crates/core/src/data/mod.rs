//! Domain types and ingestion for question/image/answer datasets.

mod io;
mod metrics;
mod pos;
mod qtype;
mod vectors;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{format_instances, load_dataset, write_instances, DatasetFiles};
pub use metrics::{accuracy, answer_embedding, modal_answer, normalize_answer, AccuracyMode, AnswerEmbedding};
pub use pos::{pos_tag, PosGroup};
pub use qtype::{classify_answer, classify_question_type, QuestionType, NUMBER_WORDS};
pub use vectors::{format_vector_file, parse_vector_file, read_vector_file, write_vector_file, VectorTable};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: expected {expected} components, found {found}")]
    DimensionMismatch { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("instance {instance} references unknown image_id {image_id}")]
    DanglingImage { instance: String, image_id: String },
    #[error("duplicate instance id {0}")]
    DuplicateInstance(String),
    #[error("duplicate vector key {key} at line {line}")]
    DuplicateKey { key: String, line: usize },
    #[error("instance {instance}: {message}")]
    InvalidInstance { instance: String, message: String },
    #[error("vector table: {0}")]
    InvalidVectors(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Where an instance's POS tags came from. Only supplied tags are written back
/// out, so a loaded file re-serializes to the same bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PosSource {
    #[default]
    Supplied,
    Tagged,
}

/// One question/image record with its annotator answers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub question: String,
    pub tokens: Vec<String>,
    pub pos: Vec<PosGroup>,
    pub pos_source: PosSource,
    pub image_id: String,
    pub annotator_answers: Vec<String>,
    pub gt_answer: String,
    pub split: Split,
}

impl Instance {
    /// Builds an instance, tagging tokens with the rule-based tagger when
    /// `pos` is `None`. The stored `gt_answer` must agree with the modal
    /// annotator answer.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        tokens: Vec<String>,
        pos: Option<Vec<PosGroup>>,
        image_id: impl Into<String>,
        annotator_answers: Vec<String>,
        gt_answer: impl Into<String>,
        split: Split,
    ) -> Result<Self, DataError> {
        let (pos, pos_source) = match pos {
            Some(p) => (p, PosSource::Supplied),
            None => (pos_tag(&tokens), PosSource::Tagged),
        };
        let instance = Instance {
            id: id.into(),
            question: question.into(),
            tokens,
            pos,
            pos_source,
            image_id: image_id.into(),
            annotator_answers,
            gt_answer: gt_answer.into(),
            split,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |message: String| DataError::InvalidInstance { instance: self.id.clone(), message };
        if self.id.is_empty() {
            return Err(fail("empty id".into()));
        }
        if self.tokens.is_empty() {
            return Err(fail("tokens must be nonempty".into()));
        }
        if self.pos.len() != self.tokens.len() {
            return Err(fail(format!("{} pos tags for {} tokens", self.pos.len(), self.tokens.len())));
        }
        if self.annotator_answers.is_empty() {
            return Err(fail("annotator_answers must be nonempty".into()));
        }
        if normalize_answer(&self.gt_answer).is_empty() {
            return Err(fail("gt_answer is empty".into()));
        }
        let modal = modal_answer(&self.annotator_answers);
        if normalize_answer(&self.gt_answer) != modal {
            return Err(fail(format!(
                "gt_answer {:?} is not the modal annotator answer {:?}",
                self.gt_answer, modal
            )));
        }
        Ok(())
    }

    pub fn question_type(&self) -> QuestionType {
        classify_question_type(self)
    }

    /// Normalized question text used to group repeated questions.
    pub fn question_key(&self) -> String {
        normalize_answer(&self.question)
    }
}

/// Instances plus the vector tables they reference.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub image_features: VectorTable,
    pub word_vectors: Option<VectorTable>,
}

impl Dataset {
    pub fn new(
        instances: Vec<Instance>,
        image_features: VectorTable,
        word_vectors: Option<VectorTable>,
    ) -> Result<Self, DataError> {
        let dataset = Dataset { instances, image_features, word_vectors };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::with_capacity(self.instances.len());
        for inst in &self.instances {
            inst.validate()?;
            if !seen.insert(inst.id.as_str()) {
                return Err(DataError::DuplicateInstance(inst.id.clone()));
            }
            if !self.image_features.contains(&inst.image_id) {
                return Err(DataError::DanglingImage {
                    instance: inst.id.clone(),
                    image_id: inst.image_id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Instance> + '_ {
        self.instances.iter().filter(move |i| i.split == split)
    }

    pub fn train(&self) -> Vec<&Instance> {
        self.split(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&Instance> {
        self.split(Split::Test).collect()
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Id → position lookup over all instances.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.instances.iter().enumerate().map(|(i, inst)| (inst.id.as_str(), i)).collect()
    }

    pub fn image_feature(&self, image_id: &str) -> Option<&[f64]> {
        self.image_features.get(image_id)
    }
}
