//! Test-double adapters whose behavior is fixed by a plant.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::{Mode, PlantDescriptor, SynthError};
use crate::adapter::{Adapter, AdapterError, Capabilities, Override, Prediction, Probe};
use crate::data::{pos_tag, Dataset, PosGroup, VectorTable};
use crate::knn::{knn, Metric, TrainMatrix};

fn train_matrix(dataset: &Dataset) -> (TrainMatrix, Vec<String>) {
    let train = dataset.train();
    let mut m = TrainMatrix::new(dataset.image_features.dim());
    for inst in &train {
        m.push(dataset.image_feature(&inst.image_id).expect("validated dataset")).expect("dims agree");
    }
    (m, train.iter().map(|i| i.gt_answer.clone()).collect())
}

fn image<'a>(images: &'a VectorTable, p: &Probe) -> Result<&'a [f64], AdapterError> {
    images.get(&p.image_id).ok_or_else(|| AdapterError::UnknownImage(p.image_id.clone()))
}

fn embedding_caps(dim: usize) -> Capabilities {
    Capabilities {
        has_embedding: true,
        embedding_dim: Some(dim),
        supports_mean_image: false,
        supports_mean_question: false,
        preferred_metric: Metric::Euclidean,
        supports_prefix: true,
        supports_pos_drop: true,
    }
}

/// Correct exactly when the instance's image lies within `gate` of some
/// training image; otherwise answers a fixed wrong token. Its joint embedding
/// is the image feature itself.
pub struct DistanceGatedOracle {
    gate: f64,
    wrong: String,
    train: Arc<TrainMatrix>,
    images: Arc<VectorTable>,
    gt: Arc<HashMap<String, String>>,
}

impl DistanceGatedOracle {
    pub fn new(dataset: &Dataset, plant: &PlantDescriptor) -> Result<Self, SynthError> {
        if plant.layout() != Some(Mode::NoveltyPlanted) {
            return Err(SynthError::Check("distance-gated oracle needs a novelty_planted dataset".into()));
        }
        let (train, _) = train_matrix(dataset);
        Ok(DistanceGatedOracle {
            gate: plant.parsed("gate")?,
            wrong: plant.require("wrong_answer")?.to_string(),
            train: Arc::new(train),
            images: Arc::new(dataset.image_features.clone()),
            gt: Arc::new(dataset.instances.iter().map(|i| (i.id.clone(), i.gt_answer.clone())).collect()),
        })
    }

    pub fn nearest_train_distance(&self, feature: &[f64]) -> f64 {
        knn(feature, &self.train, 1, Metric::Euclidean).expect("train split nonempty").neighbors[0].distance
    }
}

impl Adapter for DistanceGatedOracle {
    fn identity(&self) -> String {
        format!("oracle:distance-gated(gate={})", self.gate)
    }

    fn handshake(&mut self) -> Result<Capabilities, AdapterError> {
        Ok(embedding_caps(self.train.dim()))
    }

    fn predict(&mut self, probes: &[Probe], want_embedding: bool) -> Result<Vec<Prediction>, AdapterError> {
        probes
            .iter()
            .map(|p| {
                let v = image(&self.images, p)?;
                let gt = self.gt.get(&p.instance_id).ok_or_else(|| AdapterError::UnknownInstance(p.instance_id.clone()))?;
                let answer = if self.nearest_train_distance(v) < self.gate { gt.clone() } else { self.wrong.clone() };
                Ok(Prediction {
                    instance_id: p.instance_id.clone(),
                    probe_id: p.probe_id.clone(),
                    answer,
                    embedding: want_embedding.then(|| v.to_vec()),
                })
            })
            .collect()
    }
}

/// Regurgitates the ground-truth answer of the nearest training image.
pub struct NearestAnswerAdapter {
    train: Arc<TrainMatrix>,
    answers: Arc<Vec<String>>,
    images: Arc<VectorTable>,
}

impl NearestAnswerAdapter {
    pub fn new(dataset: &Dataset) -> Self {
        let (train, answers) = train_matrix(dataset);
        NearestAnswerAdapter {
            train: Arc::new(train),
            answers: Arc::new(answers),
            images: Arc::new(dataset.image_features.clone()),
        }
    }
}

impl Adapter for NearestAnswerAdapter {
    fn identity(&self) -> String {
        "oracle:nearest-answer".into()
    }

    fn handshake(&mut self) -> Result<Capabilities, AdapterError> {
        Ok(embedding_caps(self.train.dim()))
    }

    fn predict(&mut self, probes: &[Probe], want_embedding: bool) -> Result<Vec<Prediction>, AdapterError> {
        probes
            .iter()
            .map(|p| {
                let v = image(&self.images, p)?;
                let nn = knn(v, &self.train, 1, Metric::Euclidean).expect("train split nonempty");
                Ok(Prediction {
                    instance_id: p.instance_id.clone(),
                    probe_id: p.probe_id.clone(),
                    answer: self.answers[nn.neighbors[0].train_index].clone(),
                    embedding: want_embedding.then(|| v.to_vec()),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyPosition {
    /// The first token.
    First,
    /// The first wh-word anywhere in the question.
    Wh,
    /// The last token.
    Last,
}

impl KeyPosition {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyPosition::First => "first",
            KeyPosition::Wh => "wh",
            KeyPosition::Last => "last",
        }
    }

    pub fn parse(s: &str) -> Option<KeyPosition> {
        [KeyPosition::First, KeyPosition::Wh, KeyPosition::Last].into_iter().find(|k| k.as_str() == s)
    }

    /// The token this position selects, lowercased.
    pub fn key_of(self, tokens: &[String]) -> Option<String> {
        let lower = |t: &String| t.to_lowercase();
        match self {
            KeyPosition::First => tokens.first().map(lower),
            KeyPosition::Last => tokens.last().map(lower),
            KeyPosition::Wh => tokens.iter().zip(pos_tag(tokens)).find(|(_, g)| *g == PosGroup::Wh).map(|(t, _)| lower(t)),
        }
    }
}

/// Answers from a lookup keyed on one token of the question; anything
/// unkeyed, including an empty or mean question, gets the fallback.
#[derive(Debug, Clone)]
pub struct KeyedOracle {
    position: KeyPosition,
    keys: BTreeMap<String, String>,
    fallback: String,
}

impl KeyedOracle {
    pub fn new(position: KeyPosition, keys: BTreeMap<String, String>, fallback: impl Into<String>) -> Self {
        KeyedOracle { position, keys, fallback: fallback.into() }
    }

    pub fn from_plant(plant: &PlantDescriptor) -> Result<Self, SynthError> {
        let raw = plant.require("key_position")?;
        let position = KeyPosition::parse(raw).ok_or_else(|| SynthError::Check(format!("bad key_position {raw:?}")))?;
        let fallback = plant.get("fallback").unwrap_or(super::WRONG_ANSWER);
        Ok(KeyedOracle::new(position, plant.section("key"), fallback))
    }

    pub fn answer(&self, tokens: &[String]) -> &str {
        self.position.key_of(tokens).and_then(|k| self.keys.get(&k)).unwrap_or(&self.fallback)
    }
}

impl Adapter for KeyedOracle {
    fn identity(&self) -> String {
        format!("oracle:keyed({})", self.position.as_str())
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
                answer: match p.question_override {
                    Override::Mean => self.fallback.clone(),
                    Override::None => self.answer(&p.tokens).to_string(),
                },
                embedding: None,
            })
            .collect())
    }
}

/// The oracle matching a plant's layout.
pub fn oracle_for(dataset: &Dataset, plant: &PlantDescriptor) -> Result<Box<dyn Adapter>, SynthError> {
    match plant.layout() {
        Some(Mode::NoveltyPlanted) => Ok(Box::new(DistanceGatedOracle::new(dataset, plant)?)),
        Some(Mode::AnswerShift) => Ok(Box::new(NearestAnswerAdapter::new(dataset))),
        Some(Mode::FirstWordKeyed | Mode::WhKeyed | Mode::QuestionDominant) | None => {
            Ok(Box::new(KeyedOracle::from_plant(plant)?))
        }
        Some(m) => Err(SynthError::Check(format!("no oracle is defined for {m} datasets"))),
    }
}
