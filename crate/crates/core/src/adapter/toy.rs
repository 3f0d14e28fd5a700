//! Desk-scale stand-in model: multinomial logistic regression over a
//! bag-of-words question vector concatenated with the image feature.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Adapter, AdapterError, Capabilities, Override, Prediction, Probe};
use crate::data::{normalize_answer, Dataset, Instance, VectorTable};
use crate::knn::Metric;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("train split is empty")]
    EmptyTrain,
    #[error("instance {instance} references unknown image {image_id}")]
    MissingImage { instance: String, image_id: String },
    #[error("inconsistent model: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian weight initialization.
    pub init_scale: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { learning_rate: 0.1, epochs: 200, seed: 0, init_scale: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Image,
    Question,
}

/// Trained weights. `weights` is row-major `answers x (question_vocab + image_dim)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub question_vocab: Vec<String>,
    pub answer_vocab: Vec<String>,
    pub image_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean_question: Vec<f64>,
    pub mean_image: Vec<f64>,
    pub hyperparams: Hyperparams,
}

fn token_key(token: &str) -> String {
    token.to_lowercase()
}

fn lookup(vocab: &[String], token: &str) -> Option<usize> {
    vocab.binary_search_by(|v| v.as_str().cmp(token)).ok()
}

fn sparse_bow(vocab: &[String], tokens: &[String]) -> Vec<(usize, f64)> {
    let mut ids: Vec<usize> = tokens.iter().filter_map(|t| lookup(vocab, &token_key(t))).collect();
    ids.sort_unstable();
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(ids.len());
    for id in ids {
        match out.last_mut() {
            Some((last, c)) if *last == id => *c += 1.0,
            _ => out.push((id, 1.0)),
        }
    }
    out
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// One training input in the model's feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub bow: Vec<(usize, f64)>,
    pub image: Vec<f64>,
    pub label: usize,
}

/// Featurized train split plus the vocabularies it was built with.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub question_vocab: Vec<String>,
    pub answer_vocab: Vec<String>,
    pub image_dim: usize,
    pub examples: Vec<Example>,
}

impl TrainingSet {
    pub fn from_dataset(dataset: &Dataset) -> Result<TrainingSet, ToyError> {
        let train = dataset.train();
        if train.is_empty() {
            return Err(ToyError::EmptyTrain);
        }
        let question_vocab: Vec<String> = train
            .iter()
            .flat_map(|i| i.tokens.iter().map(|t| token_key(t)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let answer_vocab: Vec<String> = train
            .iter()
            .map(|i| normalize_answer(&i.gt_answer))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let image_dim = dataset.image_features.dim();
        let examples = train
            .iter()
            .map(|inst| {
                Ok(Example {
                    bow: sparse_bow(&question_vocab, &inst.tokens),
                    image: image_of(dataset, inst)?.to_vec(),
                    label: lookup(&answer_vocab, &normalize_answer(&inst.gt_answer)).expect("answer in vocab"),
                })
            })
            .collect::<Result<Vec<_>, ToyError>>()?;
        Ok(TrainingSet { question_vocab, answer_vocab, image_dim, examples })
    }

    fn input_dim(&self) -> usize {
        self.question_vocab.len() + self.image_dim
    }

    fn logits(&self, model: &ToyModel, ex: &Example, out: &mut [f64]) {
        let (v, width) = (self.question_vocab.len(), self.input_dim());
        for (a, o) in out.iter_mut().enumerate() {
            let row = &model.weights[a * width..(a + 1) * width];
            let mut z = model.bias[a];
            for &(j, c) in &ex.bow {
                z += row[j] * c;
            }
            for (w, x) in row[v..].iter().zip(&ex.image) {
                z += w * x;
            }
            *o = z;
        }
    }

    /// Mean cross-entropy of `model` over the examples.
    pub fn loss(&self, model: &ToyModel) -> f64 {
        let mut z = vec![0.0; self.answer_vocab.len()];
        let mut total = 0.0;
        for ex in &self.examples {
            self.logits(model, ex, &mut z);
            softmax_in_place(&mut z);
            total -= z[ex.label].max(f64::MIN_POSITIVE).ln();
        }
        total / self.examples.len() as f64
    }

    /// Analytic gradient of [`TrainingSet::loss`] with respect to
    /// `(weights, bias)`, laid out like the model's fields.
    pub fn gradient(&self, model: &ToyModel) -> (Vec<f64>, Vec<f64>) {
        let (k, v, width) = (self.answer_vocab.len(), self.question_vocab.len(), self.input_dim());
        let mut gw = vec![0.0; k * width];
        let mut gb = vec![0.0; k];
        let mut p = vec![0.0; k];
        let scale = 1.0 / self.examples.len() as f64;
        for ex in &self.examples {
            self.logits(model, ex, &mut p);
            softmax_in_place(&mut p);
            p[ex.label] -= 1.0;
            for (a, &g) in p.iter().enumerate() {
                let g = g * scale;
                gb[a] += g;
                let row = &mut gw[a * width..(a + 1) * width];
                for &(j, c) in &ex.bow {
                    row[j] += g * c;
                }
                for (r, x) in row[v..].iter_mut().zip(&ex.image) {
                    *r += g * x;
                }
            }
        }
        (gw, gb)
    }

    fn mean_question(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.question_vocab.len()];
        for ex in &self.examples {
            for &(j, c) in &ex.bow {
                m[j] += c;
            }
        }
        let n = self.examples.len() as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    fn mean_image(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.image_dim];
        for ex in &self.examples {
            for (a, x) in m.iter_mut().zip(&ex.image) {
                *a += x;
            }
        }
        let n = self.examples.len() as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Freshly initialized, untrained model over this set's vocabularies.
    pub fn init_model(&self, hyperparams: Hyperparams) -> ToyModel {
        let k = self.answer_vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed);
        let normal = Normal::new(0.0, hyperparams.init_scale).expect("finite init scale");
        ToyModel {
            question_vocab: self.question_vocab.clone(),
            answer_vocab: self.answer_vocab.clone(),
            image_dim: self.image_dim,
            weights: (0..k * self.input_dim()).map(|_| normal.sample(&mut rng)).collect(),
            bias: vec![0.0; k],
            mean_question: self.mean_question(),
            mean_image: self.mean_image(),
            hyperparams,
        }
    }

    /// Fraction of examples whose argmax prediction is the label.
    pub fn accuracy(&self, model: &ToyModel) -> f64 {
        let mut z = vec![0.0; self.answer_vocab.len()];
        let hits = self
            .examples
            .iter()
            .filter(|ex| {
                self.logits(model, ex, &mut z);
                argmax(&z) == ex.label
            })
            .count();
        hits as f64 / self.examples.len() as f64
    }
}

fn image_of<'a>(dataset: &'a Dataset, inst: &Instance) -> Result<&'a [f64], ToyError> {
    dataset.image_feature(&inst.image_id).ok_or_else(|| ToyError::MissingImage {
        instance: inst.id.clone(),
        image_id: inst.image_id.clone(),
    })
}

/// Full-batch gradient descent on mean cross-entropy.
pub fn train_toy(dataset: &Dataset, hyperparams: Hyperparams) -> Result<ToyModel, ToyError> {
    let set = TrainingSet::from_dataset(dataset)?;
    if set.answer_vocab.len() == 1 {
        log::warn!("answer vocabulary has a single entry; the toy model will always answer {:?}", set.answer_vocab[0]);
    }
    let mut model = set.init_model(hyperparams);
    for _ in 0..hyperparams.epochs {
        let (gw, gb) = set.gradient(&model);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= hyperparams.learning_rate * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= hyperparams.learning_rate * g;
        }
    }
    Ok(model)
}

/// Componentwise train-split mean of image features, or of bag-of-words
/// question vectors over the train vocabulary.
pub fn mean_feature(dataset: &Dataset, modality: Modality) -> Result<Vec<f64>, ToyError> {
    let set = TrainingSet::from_dataset(dataset)?;
    Ok(match modality {
        Modality::Image => set.mean_image(),
        Modality::Question => set.mean_question(),
    })
}

impl ToyModel {
    pub fn input_dim(&self) -> usize {
        self.question_vocab.len() + self.image_dim
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        let (k, width) = (self.answer_vocab.len(), self.input_dim());
        let checks = [
            (k > 0, "empty answer vocabulary".to_string()),
            (self.weights.len() == k * width, format!("{} weights for {k}x{width}", self.weights.len())),
            (self.bias.len() == k, format!("{} biases for {k} answers", self.bias.len())),
            (self.mean_question.len() == self.question_vocab.len(), "mean question length".into()),
            (self.mean_image.len() == self.image_dim, "mean image length".into()),
            (self.question_vocab.windows(2).all(|w| w[0] < w[1]), "question vocabulary not sorted".into()),
            (self.answer_vocab.windows(2).all(|w| w[0] < w[1]), "answer vocabulary not sorted".into()),
        ];
        match checks.into_iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(ToyError::Shape(msg)),
            None => Ok(()),
        }
    }

    /// Dense model input for `tokens` and `image`, with the requested channel
    /// swapped for its train mean. This is also the joint embedding.
    pub fn features(&self, tokens: &[String], image: &[f64], q: Override, i: Override) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        match q {
            Override::Mean => x.extend_from_slice(&self.mean_question),
            Override::None => {
                x.resize(self.question_vocab.len(), 0.0);
                for (j, c) in sparse_bow(&self.question_vocab, tokens) {
                    x[j] = c;
                }
            }
        }
        match i {
            Override::Mean => x.extend_from_slice(&self.mean_image),
            Override::None => x.extend_from_slice(image),
        }
        x
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let width = self.input_dim();
        (0..self.answer_vocab.len())
            .map(|a| {
                let row = &self.weights[a * width..(a + 1) * width];
                self.bias[a] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Highest-scoring answer; ties go to the earlier vocabulary entry.
    pub fn answer(&self, x: &[f64]) -> &str {
        &self.answer_vocab[argmax(&self.scores(x))]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<ToyModel, ToyError> {
        let model: ToyModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ToyError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|source| ToyError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<ToyModel, ToyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ToyError::Io { path: path.display().to_string(), source })?;
        ToyModel::from_json(&text)
    }
}

/// Serves a trained [`ToyModel`]; image ids resolve against the given table.
#[derive(Clone)]
pub struct ToyAdapter {
    model: Arc<ToyModel>,
    images: Arc<VectorTable>,
    label: String,
}

impl ToyAdapter {
    pub fn new(model: Arc<ToyModel>, images: Arc<VectorTable>) -> Result<ToyAdapter, ToyError> {
        if images.dim() != model.image_dim {
            return Err(ToyError::Shape(format!(
                "model expects image dim {}, table has {}",
                model.image_dim,
                images.dim()
            )));
        }
        Ok(ToyAdapter { model, images, label: "toy".into() })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }
}

impl Adapter for ToyAdapter {
    fn identity(&self) -> String {
        self.label.clone()
    }

    fn handshake(&mut self) -> Result<Capabilities, AdapterError> {
        Ok(Capabilities {
            has_embedding: true,
            embedding_dim: Some(self.model.input_dim()),
            supports_mean_image: true,
            supports_mean_question: true,
            preferred_metric: Metric::Euclidean,
            supports_prefix: true,
            supports_pos_drop: true,
        })
    }

    fn predict(&mut self, probes: &[Probe], want_embedding: bool) -> Result<Vec<Prediction>, AdapterError> {
        let (model, images) = (&self.model, &self.images);
        probes
            .par_iter()
            .map(|p| {
                let image = match p.image_override {
                    Override::Mean => &model.mean_image[..],
                    Override::None => images.get(&p.image_id).ok_or_else(|| AdapterError::UnknownImage(p.image_id.clone()))?,
                };
                let x = model.features(&p.tokens, image, p.question_override, p.image_override);
                Ok(Prediction {
                    instance_id: p.instance_id.clone(),
                    probe_id: p.probe_id.clone(),
                    answer: model.answer(&x).to_string(),
                    embedding: want_embedding.then_some(x),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn dataset(rows: &[(&str, &str, &str, Split)], images: &[(&str, Vec<f64>)]) -> Dataset {
        let instances = rows
            .iter()
            .enumerate()
            .map(|(n, (q, img, ans, split))| {
                Instance::new(
                    format!("i{n}"),
                    *q,
                    q.split_whitespace().map(String::from).collect(),
                    None,
                    *img,
                    vec![ans.to_string()],
                    *ans,
                    *split,
                )
                .unwrap()
            })
            .collect();
        let table = VectorTable::from_rows(
            images[0].1.len(),
            images.iter().map(|(k, v)| (k.to_string(), v.clone())),
        )
        .unwrap();
        Dataset::new(instances, table, None).unwrap()
    }

    #[test]
    fn mean_image_of_two() {
        let d = dataset(
            &[("a", "x", "p", Split::Train), ("b", "y", "q", Split::Train), ("c", "z", "p", Split::Test)],
            &[("x", vec![1.0, 0.0]), ("y", vec![0.0, 1.0]), ("z", vec![9.0, 9.0])],
        );
        assert_eq!(mean_feature(&d, Modality::Image).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn mean_of_single_instance_is_exact() {
        let d = dataset(&[("what is it", "x", "p", Split::Train)], &[("x", vec![0.1, -0.3, 7.25])]);
        assert_eq!(mean_feature(&d, Modality::Image).unwrap(), vec![0.1, -0.3, 7.25]);
        assert_eq!(mean_feature(&d, Modality::Question).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn empty_train_split_is_an_error() {
        let d = dataset(&[("a", "x", "p", Split::Test)], &[("x", vec![1.0])]);
        assert!(matches!(train_toy(&d, Hyperparams::default()), Err(ToyError::EmptyTrain)));
        assert!(matches!(mean_feature(&d, Modality::Image), Err(ToyError::EmptyTrain)));
    }

    #[test]
    fn single_answer_vocab_still_trains() {
        let d = dataset(&[("a", "x", "p", Split::Train), ("b", "x", "p", Split::Train)], &[("x", vec![1.0])]);
        let m = train_toy(&d, Hyperparams { epochs: 3, ..Default::default() }).unwrap();
        assert_eq!(m.answer_vocab, vec!["p"]);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let d = dataset(
            &[("what color", "x", "red", Split::Train), ("how many", "y", "2", Split::Train)],
            &[("x", vec![0.3, 0.1]), ("y", vec![-1.0, 2.0])],
        );
        let m = train_toy(&d, Hyperparams { epochs: 5, seed: 9, ..Default::default() }).unwrap();
        assert_eq!(ToyModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn tokens_are_case_folded() {
        let d = dataset(&[("What color", "x", "red", Split::Train)], &[("x", vec![0.0])]);
        let m = train_toy(&d, Hyperparams { epochs: 1, ..Default::default() }).unwrap();
        let x = m.features(&["WHAT".into(), "color".into(), "zzz".into()], &[0.0], Override::None, Override::None);
        assert_eq!(x, vec![1.0, 1.0, 0.0]);
    }
}
