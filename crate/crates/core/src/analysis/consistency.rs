//! Whether answers to a repeated question change with the image.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{mean_or_none, predict, AnalysisError, AnalysisOptions};
use crate::adapter::{Perturbation, Session};
use crate::data::{normalize_answer, Dataset, QuestionType};
use crate::stats::{histogram, Histogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyParams {
    pub min_images: usize,
    /// Open interval of X whose accuracy is compared with the overall mean.
    pub band: (f64, f64),
    pub n_bins: usize,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        ConsistencyParams { min_images: 25, band: (0.50, 0.55), n_bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionGroup {
    pub question_text: String,
    pub n_images: usize,
    pub mode_answer: String,
    /// Share of images receiving the modal answer.
    pub x: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageConsistencyReport {
    pub qtype: Option<QuestionType>,
    pub min_images: usize,
    pub band: (f64, f64),
    pub per_question: Vec<QuestionGroup>,
    pub histogram: Histogram,
    pub band_n_questions: usize,
    /// Mean over instances of the questions whose X lies in the band.
    pub band_mean_accuracy: Option<f64>,
    /// Mean over every test instance considered.
    pub overall_mean_accuracy: f64,
}

pub fn image_consistency(
    dataset: &Dataset,
    session: &mut Session,
    params: &ConsistencyParams,
    opts: &AnalysisOptions,
) -> Result<ImageConsistencyReport, AnalysisError> {
    let (low, high) = params.band;
    if !(low < high) || params.min_images == 0 {
        return Err(AnalysisError::Invalid("band must satisfy low < high and min_images must be positive".into()));
    }
    let test = opts.test_instances(dataset)?;
    let full = predict(session, &test, Perturbation::Full, false)?;
    let accuracies: Vec<f64> = test.iter().zip(&full).map(|(i, p)| opts.accuracy_of(&p.answer, i)).collect();

    // question -> instance positions, one per distinct image
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut seen: HashSet<(String, &str)> = HashSet::new();
    for (n, inst) in test.iter().enumerate() {
        let key = inst.question_key();
        if seen.insert((key.clone(), inst.image_id.as_str())) {
            groups.entry(key).or_default().push(n);
        }
    }

    let mut per_question = Vec::new();
    let mut band_acc = Vec::new();
    for (question, members) in groups {
        if members.len() < params.min_images {
            continue;
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for &n in &members {
            *counts.entry(normalize_answer(&full[n].answer)).or_default() += 1;
        }
        // BTreeMap order makes the lexicographically first answer win ties
        let (mode_answer, top) = counts.iter().fold((String::new(), 0), |best, (a, c)| {
            if *c > best.1 {
                (a.clone(), *c)
            } else {
                best
            }
        });
        let x = top as f64 / members.len() as f64;
        let accs: Vec<f64> = members.iter().map(|&n| accuracies[n]).collect();
        if low < x && x < high {
            band_acc.extend_from_slice(&accs);
        }
        per_question.push(QuestionGroup {
            question_text: question,
            n_images: members.len(),
            mode_answer,
            x,
            mean_accuracy: mean_or_none(&accs).expect("nonempty group"),
        });
    }
    let xs: Vec<f64> = per_question.iter().map(|q| q.x).collect();
    let band_n_questions = xs.iter().filter(|x| low < **x && **x < high).count();
    Ok(ImageConsistencyReport {
        qtype: opts.qtype,
        min_images: params.min_images,
        band: params.band,
        histogram: histogram(&xs, params.n_bins).map_err(|e| AnalysisError::Invalid(e.to_string()))?,
        per_question,
        band_n_questions,
        band_mean_accuracy: mean_or_none(&band_acc),
        overall_mean_accuracy: mean_or_none(&accuracies).expect("nonempty test split"),
    })
}
