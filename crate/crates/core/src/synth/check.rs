//! Independent verification of plant descriptor claims.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{KeyPosition, Mode, PlantDescriptor, SynthError};
use crate::data::{normalize_answer, Dataset, Split};
use crate::knn::{knn, Metric, TrainMatrix};

fn fail<T>(msg: String) -> Result<T, SynthError> {
    Err(SynthError::Check(msg))
}

fn train_images(d: &Dataset) -> TrainMatrix {
    let mut m = TrainMatrix::new(d.image_features.dim());
    for inst in d.train() {
        m.push(d.image_feature(&inst.image_id).expect("validated")).expect("dims agree");
    }
    m
}

/// Recomputes every property the plant descriptor claims from the dataset
/// alone and reports the first one that does not hold.
pub fn check_plant(d: &Dataset, plant: &PlantDescriptor) -> Result<(), SynthError> {
    let n_train: usize = plant.parsed("n_train")?;
    let n_test: usize = plant.parsed("n_test")?;
    if d.train().len() != n_train || d.test().len() != n_test {
        return fail(format!("split sizes {}/{} differ from declared {n_train}/{n_test}", d.train().len(), d.test().len()));
    }
    if plant.question_only() && d.image_features.iter().any(|(_, v)| v.iter().any(|x| *x != 0.0)) {
        return fail("question_only declared but an image feature is nonzero".into());
    }
    match plant.layout() {
        Some(Mode::NoveltyPlanted) => novelty(d, plant),
        Some(Mode::AnswerShift) => answer_shift(d, plant),
        Some(Mode::FirstWordKeyed | Mode::WhKeyed) => keyed(d, plant, 1.0),
        Some(Mode::QuestionDominant) | None => keyed(d, plant, plant.parsed("dominant_fraction")?),
        Some(Mode::LabelBiased) => label_biased(d, plant),
        Some(Mode::QuestionOnly) => unreachable!("not a layout"),
    }
}

fn novelty(d: &Dataset, plant: &PlantDescriptor) -> Result<(), SynthError> {
    let gate: f64 = plant.parsed("gate")?;
    let wrong = plant.require("wrong_answer")?;
    let outside: HashSet<String> = plant.list("outside_ids").into_iter().collect();
    let train = train_images(d);
    let mut n_out = 0;
    for inst in d.test() {
        let v = d.image_feature(&inst.image_id).expect("validated");
        let dist = knn(v, &train, 1, Metric::Euclidean).expect("train nonempty").neighbors[0].distance;
        let claimed_out = outside.contains(&inst.id);
        if claimed_out != (dist >= gate) {
            return fail(format!("{}: 1-NN distance {dist} on the wrong side of gate {gate}", inst.id));
        }
        if inst.annotator_answers.iter().any(|a| normalize_answer(a) == wrong) {
            return fail(format!("{}: an annotator gave the designated wrong answer", inst.id));
        }
        n_out += usize::from(claimed_out);
    }
    if n_out != outside.len() || plant.parsed::<usize>("n_outside")? != n_out {
        return fail("outside_ids does not match the test split".into());
    }
    Ok(())
}

fn answer_shift(d: &Dataset, plant: &PlantDescriptor) -> Result<(), SynthError> {
    let k: usize = plant.parsed("check_k")?;
    let shifted: HashSet<String> = plant.list("shifted_ids").into_iter().collect();
    let train = d.train();
    let seen: BTreeSet<String> = train.iter().map(|i| normalize_answer(&i.gt_answer)).collect();
    let matrix = train_images(d);
    for inst in d.test() {
        if !shifted.contains(&inst.id) {
            continue;
        }
        let gt = normalize_answer(&inst.gt_answer);
        if seen.contains(&gt) {
            return fail(format!("{}: shifted answer {gt:?} occurs in the train split", inst.id));
        }
        let v = d.image_feature(&inst.image_id).expect("validated");
        for n in knn(v, &matrix, k, Metric::Euclidean).expect("train nonempty").neighbors {
            if normalize_answer(&train[n.train_index].gt_answer) == gt {
                return fail(format!("{}: shifted answer found among its {k} nearest train answers", inst.id));
            }
        }
    }
    Ok(())
}

fn keyed(d: &Dataset, plant: &PlantDescriptor, min_fraction: f64) -> Result<(), SynthError> {
    let raw = plant.require("key_position")?;
    let position = KeyPosition::parse(raw).ok_or_else(|| SynthError::Check(format!("bad key_position {raw:?}")))?;
    let keys = plant.section("key");
    let fallback = plant.get("fallback");
    for split in [Split::Train, Split::Test] {
        let insts: Vec<_> = d.split(split).collect();
        let hits = insts
            .iter()
            .filter(|inst| {
                let want = position.key_of(&inst.tokens).and_then(|k| keys.get(&k)).map(String::as_str).or(fallback);
                want == Some(normalize_answer(&inst.gt_answer).as_str())
            })
            .count();
        let fraction = hits as f64 / insts.len() as f64;
        if fraction < min_fraction {
            return fail(format!("{split:?}: only {fraction} of answers follow the key, declared {min_fraction}"));
        }
    }
    Ok(())
}

fn label_biased(d: &Dataset, plant: &PlantDescriptor) -> Result<(), SynthError> {
    let bias: f64 = plant.parsed("bias_strength")?;
    let rep: usize = plant.parsed("repetition")?;
    let grounded_answers: BTreeSet<String> = plant.list("grounded_answers").into_iter().collect();
    let alpha = plant.section("biased_answer");
    for split in [Split::Train, Split::Test] {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for inst in d.split(split) {
            groups.entry(inst.question.clone()).or_default().push(normalize_answer(&inst.gt_answer));
        }
        for q in plant.list("biased_questions") {
            let answers = groups.get(&q).map(Vec::as_slice).unwrap_or_default();
            let a = alpha.get(&q.replace(' ', "_")).ok_or_else(|| SynthError::Check(format!("no biased answer for {q:?}")))?;
            let n_alpha = answers.iter().filter(|x| *x == a).count();
            if n_alpha != (bias * answers.len() as f64).round() as usize {
                return fail(format!("{split:?} {q:?}: {n_alpha} of {} answers are {a:?}", answers.len()));
            }
            if split == Split::Test && answers.len() != rep && answers.len() != d.test().len() % rep {
                return fail(format!("{q:?} repeated over {} test images, declared {rep}", answers.len()));
            }
        }
        for q in plant.list("grounded_questions") {
            if let Some(bad) = groups.get(&q).into_iter().flatten().find(|a| !grounded_answers.contains(*a)) {
                return fail(format!("{split:?} {q:?}: answer {bad:?} is not image-grounded"));
            }
        }
    }
    Ok(())
}
