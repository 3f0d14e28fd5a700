//! Modality ablation: swap one input channel for its training mean.

use serde::{Deserialize, Serialize};

use super::{fraction, predict, same_answer, AnalysisError, AnalysisOptions};
use crate::adapter::{Perturbation, Prediction, Session};
use crate::data::{Instance, QuestionType};
use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityAblationReport {
    pub qtype: Option<QuestionType>,
    pub n: usize,
    /// Image only (mean question) against question plus image.
    pub changed_on_adding_question: f64,
    /// Question only (mean image) against question plus image.
    pub changed_on_adding_image: f64,
    /// Both means against question with mean image.
    pub changed_from_baseline_adding_question: f64,
    /// Both means against image with mean question.
    pub changed_from_baseline_adding_image: f64,
    pub accuracy_full: f64,
    pub accuracy_question_only: f64,
    pub accuracy_image_only: f64,
    /// Image with an empty token list, when the adapter accepts prefix probes.
    pub accuracy_image_only_empty_question: Option<f64>,
    pub accuracy_both_mean: f64,
}

pub fn modality_ablation(
    dataset: &Dataset,
    session: &mut Session,
    opts: &AnalysisOptions,
) -> Result<ModalityAblationReport, AnalysisError> {
    let caps = session.capabilities().clone();
    if !(caps.supports_mean_image && caps.supports_mean_question) {
        return Err(AnalysisError::Capability(format!(
            "adapter {} must support both mean-image and mean-question substitution",
            session.identity()
        )));
    }
    let test = opts.test_instances(dataset)?;
    let full = predict(session, &test, Perturbation::Full, false)?;
    let q_only = predict(session, &test, Perturbation::ImageMean, false)?;
    let i_only = predict(session, &test, Perturbation::QuestionMean, false)?;
    let neither = predict(session, &test, Perturbation::BothMean, false)?;
    let empty_q =
        if caps.supports_prefix { Some(predict(session, &test, Perturbation::Prefix(0), false)?) } else { None };

    let changed = |a: &[Prediction], b: &[Prediction]| {
        fraction(a.iter().zip(b).filter(|(x, y)| !same_answer(&x.answer, &y.answer)).count(), a.len())
    };
    let acc = |preds: &[Prediction], insts: &[&Instance]| {
        insts.iter().zip(preds).map(|(i, p)| opts.accuracy_of(&p.answer, i)).sum::<f64>() / insts.len() as f64
    };
    Ok(ModalityAblationReport {
        qtype: opts.qtype,
        n: test.len(),
        changed_on_adding_question: changed(&i_only, &full),
        changed_on_adding_image: changed(&q_only, &full),
        changed_from_baseline_adding_question: changed(&neither, &q_only),
        changed_from_baseline_adding_image: changed(&neither, &i_only),
        accuracy_full: acc(&full, &test),
        accuracy_question_only: acc(&q_only, &test),
        accuracy_image_only: acc(&i_only, &test),
        accuracy_image_only_empty_question: empty_q.as_deref().map(|p| acc(p, &test)),
        accuracy_both_mean: acc(&neither, &test),
    })
}
