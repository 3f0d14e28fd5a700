use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::VectorTable;

/// Lowercases, trims, and collapses internal whitespace. Articles and
/// punctuation are left alone.
pub fn normalize_answer(answer: &str) -> String {
    answer.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Most frequent normalized answer; ties go to the answer seen first.
pub fn modal_answer<S: AsRef<str>>(answers: &[S]) -> String {
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for (pos, a) in answers.iter().enumerate() {
        let entry = counts.entry(normalize_answer(a.as_ref())).or_insert((0, pos));
        entry.0 += 1;
    }
    counts
        .into_iter()
        .max_by(|(_, (ca, fa)), (_, (cb, fb))| ca.cmp(cb).then(fb.cmp(fa)))
        .map(|(a, _)| a)
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    Exact,
    #[default]
    Consensus,
}

impl fmt::Display for AccuracyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccuracyMode::Exact => "exact",
            AccuracyMode::Consensus => "consensus",
        })
    }
}

impl FromStr for AccuracyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(AccuracyMode::Exact),
            "consensus" => Ok(AccuracyMode::Consensus),
            _ => Err(format!("unknown accuracy mode {s:?}")),
        }
    }
}

/// Scores a predicted answer against annotator answers.
///
/// `Exact` compares with the modal annotator answer; `Consensus` gives
/// `min(matching annotators / 3, 1)`, so it only ever takes the values
/// 0, 1/3, 2/3 and 1.
pub fn accuracy<S: AsRef<str>>(predicted: &str, annotator_answers: &[S], mode: AccuracyMode) -> f64 {
    let predicted = normalize_answer(predicted);
    match mode {
        AccuracyMode::Exact => {
            if predicted == modal_answer(annotator_answers) {
                1.0
            } else {
                0.0
            }
        }
        AccuracyMode::Consensus => {
            let matches = annotator_answers.iter().filter(|a| normalize_answer(a.as_ref()) == predicted).count();
            match matches {
                0 => 0.0,
                1 => 1.0 / 3.0,
                2 => 2.0 / 3.0,
                _ => 1.0,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerEmbedding {
    pub vector: Vec<f64>,
    /// Set when no token of the answer was found in the table.
    pub oov: bool,
}

/// Mean word vector over the answer's in-vocabulary tokens.
pub fn answer_embedding(answer: &str, word_vectors: &VectorTable) -> AnswerEmbedding {
    let normalized = normalize_answer(answer);
    let mut sum = vec![0.0; word_vectors.dim()];
    let mut found = 0usize;
    for token in normalized.split(' ') {
        if let Some(v) = word_vectors.get(token) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            found += 1;
        }
    }
    if found == 0 {
        return AnswerEmbedding { vector: sum, oov: true };
    }
    let n = found as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    AnswerEmbedding { vector: sum, oov: false }
}
