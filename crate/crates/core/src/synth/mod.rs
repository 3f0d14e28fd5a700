//! Seeded synthetic datasets with planted, declared structure.
//!
//! Every generated dataset comes with a [`PlantDescriptor`] (`plant.desc`)
//! stating exactly what was built in, so tests can check analysis outcomes
//! against known ground truth. [`check_plant`] recomputes each claim from the
//! emitted data.

mod check;
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Instance, Split, VectorTable};
use crate::knn::{knn, Metric, TrainMatrix};

pub use check::check_plant;
pub use oracle::{oracle_for, DistanceGatedOracle, KeyPosition, KeyedOracle, NearestAnswerAdapter};

pub const PLANT_FILE: &str = "plant.desc";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("inconsistent config: {0}")]
    Config(String),
    #[error("could not place a point on the intended side of the gate after {0} attempts")]
    Placement(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("plant descriptor line {line}: {message}")]
    Descriptor { line: usize, message: String },
    #[error("plant check failed: {0}")]
    Check(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NoveltyPlanted,
    AnswerShift,
    FirstWordKeyed,
    WhKeyed,
    LabelBiased,
    QuestionOnly,
    QuestionDominant,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::NoveltyPlanted,
        Mode::AnswerShift,
        Mode::FirstWordKeyed,
        Mode::WhKeyed,
        Mode::LabelBiased,
        Mode::QuestionOnly,
        Mode::QuestionDominant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NoveltyPlanted => "novelty_planted",
            Mode::AnswerShift => "answer_shift",
            Mode::FirstWordKeyed => "first_word_keyed",
            Mode::WhKeyed => "wh_keyed",
            Mode::LabelBiased => "label_biased",
            Mode::QuestionOnly => "question_only",
            Mode::QuestionDominant => "question_dominant",
        }
    }

    /// `question_only` modifies features; every other mode decides the layout.
    pub fn is_layout(self) -> bool {
        self != Mode::QuestionOnly
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Mode::ALL.into_iter().find(|m| m.as_str() == norm).ok_or_else(|| format!("unknown synth mode {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub question_vocab_size: usize,
    pub answer_vocab_size: usize,
    pub image_dim: usize,
    pub modes: BTreeSet<Mode>,
    /// Images per repeated test question.
    pub repetition: usize,
    pub novelty_gate_distance: f64,
    pub bias_strength: f64,
    pub word_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_train: 600,
            n_test: 300,
            question_vocab_size: 40,
            answer_vocab_size: 12,
            image_dim: 16,
            modes: BTreeSet::new(),
            repetition: 30,
            novelty_gate_distance: 2.0,
            bias_strength: 0.9,
            word_dim: 16,
        }
    }
}

impl SynthConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.modes.insert(mode);
        self
    }

    pub fn layout(&self) -> Option<Mode> {
        self.modes.iter().copied().find(|m| m.is_layout())
    }

    pub fn question_only(&self) -> bool {
        self.modes.contains(&Mode::QuestionOnly)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n_train == 0 || self.n_test == 0 {
            return fail("n_train and n_test must be positive");
        }
        if self.image_dim == 0 || self.word_dim == 0 || self.question_vocab_size == 0 {
            return fail("image_dim, word_dim and question_vocab_size must be positive");
        }
        if self.answer_vocab_size < 6 {
            return fail("answer_vocab_size must be at least 6");
        }
        if self.repetition == 0 || self.repetition > self.n_test {
            return fail("repetition must be in 1..=n_test");
        }
        if !(0.5..=1.0).contains(&self.bias_strength) {
            return fail("bias_strength must be in [0.5, 1]");
        }
        if !(self.novelty_gate_distance.is_finite() && self.novelty_gate_distance > 0.0) {
            return fail("novelty_gate_distance must be positive");
        }
        let layouts: Vec<Mode> = self.modes.iter().copied().filter(|m| m.is_layout()).collect();
        if layouts.len() > 1 {
            return Err(SynthError::Config(format!(
                "at most one layout mode per dataset, got {}",
                layouts.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        if self.question_only() && matches!(self.layout(), Some(Mode::NoveltyPlanted | Mode::AnswerShift)) {
            return fail("question_only zeroes image features, which the distance-based modes rely on");
        }
        if self.layout() == Some(Mode::LabelBiased) && self.n_train < self.n_test / self.repetition {
            return fail("label_biased needs at least one train instance per repeated question");
        }
        Ok(())
    }
}

/// Declared ground truth as sorted `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlantDescriptor {
    pub entries: BTreeMap<String, String>,
}

impl PlantDescriptor {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, SynthError> {
        self.get(key).ok_or_else(|| SynthError::Check(format!("plant descriptor lacks {key}")))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<T, SynthError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| SynthError::Check(format!("bad value for {key}: {raw:?}")))
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        match self.get(key) {
            Some("") | None => Vec::new(),
            Some(v) => v.split(',').map(String::from).collect(),
        }
    }

    pub fn layout(&self) -> Option<Mode> {
        self.get("mode").and_then(|m| m.parse().ok()).filter(|m: &Mode| m.is_layout())
    }

    pub fn question_only(&self) -> bool {
        self.get("question_only") == Some("true")
    }

    /// Entries under `prefix.`, keyed by the remainder.
    pub fn section(&self, prefix: &str) -> BTreeMap<String, String> {
        let p = format!("{prefix}.");
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|rest| (rest.to_string(), v.clone())))
            .collect()
    }

    pub fn format(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<PlantDescriptor, SynthError> {
        let mut d = PlantDescriptor::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SynthError::Descriptor { line: i + 1, message: "expected key=value".into() })?;
            if d.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(SynthError::Descriptor { line: i + 1, message: format!("duplicate key {k}") });
            }
        }
        Ok(d)
    }

    pub fn read(path: &Path) -> Result<PlantDescriptor, SynthError> {
        PlantDescriptor::parse(&std::fs::read_to_string(path)?)
    }
}

const NOUNS: &[&str] = &[
    "ground", "dog", "cat", "car", "man", "woman", "table", "street", "sky", "tree", "bus", "train", "plate", "shirt",
    "horse", "bird", "ball", "room", "wall", "sign", "boat", "water", "field", "house", "kite", "chair", "bed", "phone",
    "pizza", "bench", "clock", "window", "door", "umbrella", "truck", "cake", "grass", "snow", "hat", "bag",
];

const ANSWERS: &[&str] = &[
    "yes", "no", "2", "3", "red", "blue", "white", "snow", "grass", "tennis", "bakery", "1", "green", "black", "4",
    "baseball", "kitchen", "frisbee", "surfing", "brown", "wood", "water", "5", "table",
];

const UNSEEN_ANSWERS: &[&str] = &[
    "giraffe", "zebra", "skiing", "elephant", "purple", "umbrella", "sandwich", "broccoli", "motorcycle", "airplane",
];

const WH: &[&str] = &["what", "which", "who", "where", "when", "why", "how"];
const PRONOUNS: &[&str] = &["it", "he", "she", "they"];
const ANNOTATORS: usize = 10;

/// Fixed wrong answer of the distance-gated oracle; never a ground truth.
pub const WRONG_ANSWER: &str = "wrong";

fn vocab(base: &[&str], n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let round = i / base.len();
            let w = base[i % base.len()];
            if round == 0 {
                w.to_string()
            } else {
                format!("{w}{round}")
            }
        })
        .collect()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn join(items: &[String]) -> String {
    items.join(",")
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    nouns: Vec<String>,
    answers: Vec<String>,
    instances: Vec<Instance>,
    images: Vec<(String, Vec<f64>)>,
    plant: PlantDescriptor,
    counts: [usize; 2],
}

impl<'a> Gen<'a> {
    fn new(cfg: &'a SynthConfig) -> Self {
        Gen {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            nouns: vocab(NOUNS, cfg.question_vocab_size),
            answers: vocab(ANSWERS, cfg.answer_vocab_size),
            instances: Vec::new(),
            images: Vec::new(),
            plant: PlantDescriptor::default(),
            counts: [0, 0],
        }
    }

    fn gaussian(&mut self, sigma: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * sigma
    }

    fn centers(&mut self, n: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..self.cfg.image_dim).map(|_| round4(self.gaussian(scale))).collect()).collect()
    }

    fn near(&mut self, center: &[f64], sigma: f64) -> Vec<f64> {
        center.iter().map(|c| round4(c + self.gaussian(sigma))).collect()
    }

    fn pick<'b, T>(&mut self, items: &'b [T]) -> &'b T {
        &items[self.rng.gen_range(0..items.len())]
    }

    fn noun(&mut self) -> String {
        let i = self.rng.gen_range(0..self.nouns.len());
        self.nouns[i].clone()
    }

    fn wh(&mut self) -> String {
        self.pick(WH).to_string()
    }

    /// A question from a small set of templates. `wh` of `None` gives a
    /// yes/no style question without any wh-word.
    fn question(&mut self, wh: Option<&str>) -> Vec<String> {
        let (n1, n2) = (self.noun(), self.noun());
        let p = self.pick(PRONOUNS).to_string();
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let Some(wh) = wh else {
            return s(&["is", "the", &n1, "on", "the", &n2]);
        };
        match (wh, self.rng.gen_range(0..5)) {
            ("how", 0 | 1) => s(&["how", "many", &n1, "are", "in", "the", &n2]),
            (_, 0) => s(&[wh, "is", "the", &n1]),
            (_, 1) => s(&[wh, "is", "on", "the", &n1]),
            (_, 2) => s(&[wh, "is", &p, "holding"]),
            (_, 3) => s(&[wh, "color", "is", "the", &n1, "near", "the", &n2]),
            _ => s(&["on", "the", &n1, wh, "is", &p, "holding"]),
        }
    }

    fn annotators(&mut self, gt: &str, exclude: &[&str]) -> Vec<String> {
        let n_gt = self.rng.gen_range(6..=ANNOTATORS);
        let pool: Vec<String> =
            self.answers.iter().filter(|a| *a != gt && !exclude.contains(&a.as_str())).cloned().collect();
        let mut out = vec![gt.to_string(); n_gt];
        for _ in n_gt..ANNOTATORS {
            out.push(self.pick(&pool).clone());
        }
        out.shuffle(&mut self.rng);
        out
    }

    fn add(&mut self, split: Split, tokens: Vec<String>, image: Vec<f64>, gt: &str, exclude: &[&str]) -> Result<String, SynthError> {
        let slot = split as usize;
        self.counts[slot] += 1;
        let id = format!("{}-{:05}", if split == Split::Train { "train" } else { "test" }, self.counts[slot]);
        let image_id = format!("img-{id}");
        let answers = self.annotators(gt, exclude);
        let question = tokens.join(" ");
        let inst = Instance::new(&id, question, tokens, None, &image_id, answers, gt, split)?;
        self.instances.push(inst);
        self.images.push((image_id, image));
        Ok(id)
    }

    fn finish(mut self) -> Result<(Dataset, PlantDescriptor), SynthError> {
        if self.cfg.question_only() {
            for (_, v) in &mut self.images {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
            self.plant.set("question_only", "true");
        }
        let mut words: BTreeSet<String> = self.answers.iter().cloned().collect();
        words.extend(UNSEEN_ANSWERS.iter().map(|s| s.to_string()));
        let mut wv_rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x5eed_0f_a115);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let word_vectors = VectorTable::from_rows(
            self.cfg.word_dim,
            words.into_iter().map(|w| {
                let v: Vec<f64> = (0..self.cfg.word_dim).map(|_| round4(normal.sample(&mut wv_rng))).collect();
                (w, v)
            }),
        )?;
        let images = VectorTable::from_rows(self.cfg.image_dim, self.images)?;
        let dataset = Dataset::new(self.instances, images, Some(word_vectors))?;
        let mut plant = self.plant;
        plant.set("mode", self.cfg.layout().map_or("base", Mode::as_str));
        plant.set("seed", self.cfg.seed);
        plant.set("n_train", self.cfg.n_train);
        plant.set("n_test", self.cfg.n_test);
        Ok((dataset, plant))
    }
}

/// Builds a dataset and its plant descriptor. Deterministic per config.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, PlantDescriptor), SynthError> {
    cfg.validate()?;
    let mut g = Gen::new(cfg);
    match cfg.layout() {
        None => base(&mut g)?,
        Some(Mode::NoveltyPlanted) => novelty_planted(&mut g)?,
        Some(Mode::AnswerShift) => answer_shift(&mut g)?,
        Some(Mode::FirstWordKeyed) => keyed(&mut g, KeyPosition::First)?,
        Some(Mode::WhKeyed) => keyed(&mut g, KeyPosition::Wh)?,
        Some(Mode::LabelBiased) => label_biased(&mut g)?,
        Some(Mode::QuestionDominant) => question_dominant(&mut g, 0.9)?,
        Some(Mode::QuestionOnly) => unreachable!("not a layout"),
    }
    g.finish()
}

/// Writes the dataset files plus `plant.desc` into `dir`.
pub fn write_generated(dir: &Path, dataset: &Dataset, plant: &PlantDescriptor) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    dataset.write_dir(dir)?;
    std::fs::write(dir.join(PLANT_FILE), plant.format())?;
    Ok(())
}

fn splits(cfg: &SynthConfig) -> impl Iterator<Item = Split> {
    std::iter::repeat(Split::Train).take(cfg.n_train).chain(std::iter::repeat(Split::Test).take(cfg.n_test))
}

fn base(g: &mut Gen) -> Result<(), SynthError> {
    question_dominant(g, 0.85)
}

fn question_dominant(g: &mut Gen, fraction: f64) -> Result<(), SynthError> {
    let n_clusters = 6;
    let centers = g.centers(n_clusters, 1.0);
    let n_ans = g.answers.len();
    // one topic noun per answer, so each keyed token is frequent enough to learn
    let mut shuffled = g.answers.clone();
    shuffled.shuffle(&mut g.rng);
    let topics: Vec<String> = g.nouns.iter().take(n_ans).cloned().collect();
    let noun_key: BTreeMap<String, String> = topics.iter().cloned().zip(shuffled).collect();
    let cluster_key: Vec<String> = (0..n_clusters).map(|c| g.answers[(c * 5 + 1) % n_ans].clone()).collect();
    for split in [Split::Train, Split::Test] {
        let n = if split == Split::Train { g.cfg.n_train } else { g.cfg.n_test };
        let n_keyed = (fraction * n as f64).round() as usize;
        let mut keyed_flags: Vec<bool> = (0..n).map(|i| i < n_keyed).collect();
        keyed_flags.shuffle(&mut g.rng);
        for by_noun in keyed_flags {
            let c = g.rng.gen_range(0..n_clusters);
            let noun = g.pick(&topics).clone();
            let wh = g.wh();
            let mut tokens = vec![wh, "is".to_string(), "the".to_string()];
            if g.rng.gen_bool(0.5) {
                tokens.push("on".into());
                tokens.push("the".into());
            }
            tokens.push(noun.clone());
            let image = g.near(&centers[c], 0.2);
            let gt = if by_noun { noun_key[&noun].clone() } else { cluster_key[c].clone() };
            g.add(split, tokens, image, &gt, &[])?;
        }
    }
    g.plant.set("key_position", "last");
    g.plant.set("dominant_fraction", fraction);
    for (n, a) in noun_key {
        g.plant.set(format!("key.{n}"), a);
    }
    Ok(())
}

fn nearest_distance(train: &TrainMatrix, v: &[f64]) -> f64 {
    knn(v, train, 1, Metric::Euclidean).expect("nonempty train").neighbors[0].distance
}

const MAX_ATTEMPTS: usize = 10_000;

fn novelty_planted(g: &mut Gen) -> Result<(), SynthError> {
    let gate = g.cfg.novelty_gate_distance;
    let dim = g.cfg.image_dim as f64;
    let n_clusters = 6;
    let centers = g.centers(n_clusters, 1.5 * gate);
    let spread = 0.4 * gate / dim.sqrt();
    let jitter = 0.25 * gate / dim.sqrt();
    let (near_max, far_min) = (0.5 * gate, 1.5 * gate);
    let cluster_answer: Vec<String> = (0..n_clusters).map(|c| g.answers[c % g.answers.len()].clone()).collect();

    let mut train_rows = Vec::with_capacity(g.cfg.n_train);
    for _ in 0..g.cfg.n_train {
        let c = g.rng.gen_range(0..n_clusters);
        let image = g.near(&centers[c], spread);
        train_rows.push(image.clone());
        let q = { let wh = g.wh(); g.question(Some(&wh)) };
        g.add(Split::Train, q, image, &cluster_answer[c], &[])?;
    }
    let train = TrainMatrix::from_rows(g.cfg.image_dim, train_rows.iter().map(|r| r.as_slice())).expect("dims agree");

    let n_far = g.cfg.n_test / 2;
    let mut far_flags: Vec<bool> = (0..g.cfg.n_test).map(|i| i < n_far).collect();
    far_flags.shuffle(&mut g.rng);
    let mut outside = Vec::new();
    for far in far_flags {
        let c = g.rng.gen_range(0..n_clusters);
        let mut attempts = 0;
        let image = loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(SynthError::Placement(MAX_ATTEMPTS));
            }
            let candidate = if far {
                let dir: Vec<f64> = (0..g.cfg.image_dim).map(|_| g.gaussian(1.0)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                centers[c].iter().zip(&dir).map(|(m, d)| round4(m + 3.0 * gate * d / norm)).collect::<Vec<_>>()
            } else {
                let anchor = train_rows[g.rng.gen_range(0..train_rows.len())].clone();
                g.near(&anchor, jitter)
            };
            let d = nearest_distance(&train, &candidate);
            if (far && d >= far_min) || (!far && d <= near_max) {
                break candidate;
            }
        };
        let q = { let wh = g.wh(); g.question(Some(&wh)) };
        let id = g.add(Split::Test, q, image, &cluster_answer[c], &[WRONG_ANSWER])?;
        if far {
            outside.push(id);
        }
    }
    g.plant.set("gate", gate);
    g.plant.set("wrong_answer", WRONG_ANSWER);
    g.plant.set("near_max", near_max);
    g.plant.set("far_min", far_min);
    g.plant.set("n_inside", g.cfg.n_test - outside.len());
    g.plant.set("n_outside", outside.len());
    g.plant.set("outside_ids", join(&outside));
    Ok(())
}

fn answer_shift(g: &mut Gen) -> Result<(), SynthError> {
    let n_clusters = g.answers.len().min(8);
    let centers = g.centers(n_clusters, 1.5);
    let cluster_answer: Vec<String> = g.answers[..n_clusters].to_vec();
    let cluster_questions: Vec<Vec<Vec<String>>> = (0..n_clusters)
        .map(|_| (0..3).map(|_| { let wh = g.wh(); g.question(Some(&wh)) }).collect())
        .collect();
    for _ in 0..g.cfg.n_train {
        let c = g.rng.gen_range(0..n_clusters);
        let q = g.pick(&cluster_questions[c]).clone();
        let image = g.near(&centers[c], 0.3);
        g.add(Split::Train, q, image, &cluster_answer[c], &[])?;
    }
    let n_shift = g.cfg.n_test / 2;
    let mut flags: Vec<bool> = (0..g.cfg.n_test).map(|i| i < n_shift).collect();
    flags.shuffle(&mut g.rng);
    let mut shifted = Vec::new();
    for shift in flags {
        let c = g.rng.gen_range(0..n_clusters);
        let q = g.pick(&cluster_questions[c]).clone();
        let image = g.near(&centers[c], 0.3);
        if shift {
            let gt = g.pick(UNSEEN_ANSWERS).to_string();
            let id = g.add(Split::Test, q, image, &gt, &[cluster_answer[c].as_str()])?;
            shifted.push(id);
        } else {
            g.add(Split::Test, q, image, &cluster_answer[c], &[])?;
        }
    }
    g.plant.set("shifted_ids", join(&shifted));
    g.plant.set("n_shifted", shifted.len());
    g.plant.set("unseen_answers", UNSEEN_ANSWERS.join(","));
    g.plant.set("check_k", 15);
    Ok(())
}

fn keyed(g: &mut Gen, position: KeyPosition) -> Result<(), SynthError> {
    let fallback = g.answers[0].clone();
    let mut keys: Vec<&str> = WH.to_vec();
    if position == KeyPosition::First {
        keys.push("is");
    }
    let key_answer: BTreeMap<String, String> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| (k.to_string(), g.answers[1 + i % (g.answers.len() - 1)].clone()))
        .collect();
    let centers = g.centers(4, 1.0);
    for split in splits(g.cfg).collect::<Vec<_>>() {
        let key = g.pick(&keys).to_string();
        let no_wh = match position {
            KeyPosition::First => key == "is",
            _ => g.rng.gen_bool(0.1),
        };
        let tokens = loop {
            let t = if no_wh { g.question(None) } else { g.question(Some(&key)) };
            if position == KeyPosition::Wh || t[0] == key {
                break t;
            }
        };
        let gt = if position == KeyPosition::Wh && no_wh { fallback.clone() } else { key_answer[&key].clone() };
        let c = g.rng.gen_range(0..centers.len());
        let image = g.near(&centers[c], 0.3);
        g.add(split, tokens, image, &gt, &[])?;
    }
    g.plant.set("key_position", position.as_str());
    g.plant.set("fallback", fallback);
    for (k, a) in key_answer {
        g.plant.set(format!("key.{k}"), a);
    }
    Ok(())
}

fn label_biased(g: &mut Gen) -> Result<(), SynthError> {
    let rep = g.cfg.repetition;
    let bias = g.cfg.bias_strength;
    let n_groups = g.cfg.n_test.div_ceil(rep);
    let n_biased = n_groups.div_ceil(2);
    let n_clusters = 4;
    let centers = g.centers(n_clusters, 1.0);
    let grounded_answer: Vec<String> = g.answers[..n_clusters].to_vec();
    let biased_pool: Vec<String> = g.answers[n_clusters..].to_vec();

    // one distinct question text per group
    let mut nouns = g.nouns.clone();
    nouns.shuffle(&mut g.rng);
    let questions: Vec<Vec<String>> = (0..n_groups)
        .map(|i| {
            let noun = if i < nouns.len() { nouns[i].clone() } else { format!("{}{}", nouns[i % nouns.len()], i) };
            let verb = if i < n_biased { "covers" } else { "is" };
            ["what", verb, "the", &noun].iter().map(|s| s.to_string()).collect()
        })
        .collect();
    let alpha: Vec<String> = (0..n_biased).map(|q| biased_pool[q % biased_pool.len()].clone()).collect();

    let biased_answers = |g: &mut Gen, q: usize, n: usize| -> Vec<String> {
        let n_alpha = (bias * n as f64).round() as usize;
        let others: Vec<String> = biased_pool.iter().filter(|a| **a != alpha[q]).cloned().collect();
        let mut v: Vec<String> = (0..n).map(|i| if i < n_alpha { alpha[q].clone() } else { g.pick(&others).clone() }).collect();
        v.shuffle(&mut g.rng);
        v
    };

    for q in 0..n_groups {
        let m = g.cfg.n_train / n_groups + usize::from(q < g.cfg.n_train % n_groups);
        if q < n_biased {
            for gt in biased_answers(g, q, m) {
                let c = g.rng.gen_range(0..n_clusters);
                let image = g.near(&centers[c], 0.2);
                g.add(Split::Train, questions[q].clone(), image, &gt, &[])?;
            }
        } else {
            for _ in 0..m {
                let c = g.rng.gen_range(0..n_clusters);
                let image = g.near(&centers[c], 0.2);
                g.add(Split::Train, questions[q].clone(), image, &grounded_answer[c], &[])?;
            }
        }
    }
    let mut remaining = g.cfg.n_test;
    for q in 0..n_groups {
        let n = rep.min(remaining);
        remaining -= n;
        if q < n_biased {
            for gt in biased_answers(g, q, n) {
                let c = g.rng.gen_range(0..n_clusters);
                let image = g.near(&centers[c], 0.2);
                g.add(Split::Test, questions[q].clone(), image, &gt, &[])?;
            }
        } else {
            // a slim majority of one image cluster, the rest from another
            let a = g.rng.gen_range(0..n_clusters);
            let b = (a + g.rng.gen_range(1..n_clusters)) % n_clusters;
            let n_major = n / 2 + 1;
            let mut clusters: Vec<usize> = (0..n).map(|i| if i < n_major { a } else { b }).collect();
            clusters.shuffle(&mut g.rng);
            for c in clusters {
                let image = g.near(&centers[c], 0.2);
                g.add(Split::Test, questions[q].clone(), image, &grounded_answer[c], &[])?;
            }
        }
    }
    let text = |qs: &[Vec<String>]| qs.iter().map(|q| q.join(" ")).collect::<Vec<_>>().join(",");
    g.plant.set("bias_strength", bias);
    g.plant.set("repetition", rep);
    g.plant.set("biased_questions", text(&questions[..n_biased]));
    g.plant.set("grounded_questions", text(&questions[n_biased..]));
    g.plant.set("grounded_answers", join(&grounded_answer));
    for (q, a) in alpha.iter().enumerate() {
        g.plant.set(format!("biased_answer.{}", questions[q].join("_")), a);
    }
    Ok(())
}
