//! Predicting a model's mistakes from how far an instance is from training data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::novelty::{answer_distances, best_k_index, qi_distances, KRow};
use super::{AnalysisError, AnalysisOptions};
use crate::adapter::Session;
use crate::data::{Dataset, QuestionType};
use crate::knn::Metric;

pub const MIN_FAILURE_INSTANCES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureFeature {
    QiDistance,
    AnswerDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailurePredictionReport {
    pub feature: FailureFeature,
    pub k: Option<usize>,
    pub metric: Option<Metric>,
    pub qtype: Option<QuestionType>,
    /// Failure is predicted iff the distance exceeds this.
    pub threshold: Option<f64>,
    pub split_seed: u64,
    pub n_fit: usize,
    pub n_eval: usize,
    pub n_failures: usize,
    /// All held-out metrics; `None` where a denominator is empty.
    pub failure_recall: Option<f64>,
    pub failure_precision: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    /// Fraction of all mistakes whose distance exceeds the threshold.
    pub predicted_failure_fraction_of_mistakes: Option<f64>,
    pub note: Option<String>,
}

/// A prediction counts as a mistake when it earns less than half credit.
pub fn is_failure(accuracy: f64) -> bool {
    accuracy < 0.5
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

struct Confusion {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

impl Confusion {
    fn of(points: &[(f64, bool)], threshold: f64) -> Confusion {
        let mut c = Confusion { tp: 0, fp: 0, tn: 0, fn_: 0 };
        for &(d, failed) in points {
            match (d > threshold, failed) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    fn balanced_accuracy(&self) -> Option<f64> {
        Some((self.recall()? + self.specificity()?) / 2.0)
    }
}

/// Candidate cut points: midpoints between consecutive distinct distances plus
/// one point below and one above the range.
fn candidates(points: &[(f64, bool)]) -> Vec<f64> {
    let mut ds: Vec<f64> = points.iter().map(|p| p.0).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    let mut out = Vec::with_capacity(ds.len() + 1);
    out.push(ds[0] - 1.0);
    out.extend(ds.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(ds[ds.len() - 1] + 1.0);
    out
}

fn fit_threshold(points: &[(f64, bool)]) -> f64 {
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for t in candidates(points) {
        let ba = Confusion::of(points, t).balanced_accuracy().expect("both classes present");
        if ba > best.1 {
            best = (t, ba);
        }
    }
    best.0
}

/// Seeded 50/50 split; a single distance threshold is fitted on the first
/// half to maximize balanced accuracy and evaluated on the second.
pub fn failure_prediction(
    distances: &[f64],
    failures: &[bool],
    split_seed: u64,
) -> Result<FailurePredictionReport, AnalysisError> {
    failure_prediction_min(distances, failures, split_seed, MIN_FAILURE_INSTANCES)
}

/// [`failure_prediction`] with a custom minimum instance count.
pub fn failure_prediction_min(
    distances: &[f64],
    failures: &[bool],
    split_seed: u64,
    min_instances: usize,
) -> Result<FailurePredictionReport, AnalysisError> {
    if distances.len() != failures.len() {
        return Err(AnalysisError::Invalid(format!("{} distances for {} outcomes", distances.len(), failures.len())));
    }
    if distances.len() < min_instances.max(2) {
        return Err(AnalysisError::Invalid(format!(
            "failure prediction needs at least {} instances, got {}",
            min_instances.max(2),
            distances.len()
        )));
    }
    let points: Vec<(f64, bool)> = distances.iter().copied().zip(failures.iter().copied()).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let (fit_idx, eval_idx) = order.split_at(points.len() / 2);
    let fit: Vec<(f64, bool)> = fit_idx.iter().map(|&i| points[i]).collect();
    let eval: Vec<(f64, bool)> = eval_idx.iter().map(|&i| points[i]).collect();
    let n_failures = failures.iter().filter(|f| **f).count();
    let mut report = FailurePredictionReport {
        feature: FailureFeature::QiDistance,
        k: None,
        metric: None,
        qtype: None,
        threshold: None,
        split_seed,
        n_fit: fit.len(),
        n_eval: eval.len(),
        n_failures,
        failure_recall: None,
        failure_precision: None,
        balanced_accuracy: None,
        predicted_failure_fraction_of_mistakes: None,
        note: None,
    };
    let fit_failures = fit.iter().filter(|p| p.1).count();
    if fit_failures == 0 || fit_failures == fit.len() {
        report.note = Some("fitting split has a single class; no threshold fitted".into());
        return Ok(report);
    }
    let t = fit_threshold(&fit);
    let c = Confusion::of(&eval, t);
    report.threshold = Some(t);
    report.failure_recall = c.recall();
    report.failure_precision = ratio(c.tp, c.tp + c.fp);
    report.balanced_accuracy = c.balanced_accuracy();
    report.predicted_failure_fraction_of_mistakes = Confusion::of(&points, t).recall();
    Ok(report)
}

/// Failure prediction from QI or answer distances at `k`, or at the k of the
/// grid with the strongest binned correlation when `k` is a grid.
#[allow(clippy::too_many_arguments)]
pub fn failure_analysis(
    dataset: &Dataset,
    session: &mut Session,
    feature: FailureFeature,
    k_grid: &[usize],
    metric: Option<Metric>,
    split_seed: u64,
    opts: &AnalysisOptions,
) -> Result<FailurePredictionReport, AnalysisError> {
    let data = match feature {
        FailureFeature::QiDistance => qi_distances(dataset, session, k_grid, metric, opts)?,
        FailureFeature::AnswerDistance => answer_distances(dataset, session, k_grid, metric, opts)?,
    };
    let rows: Vec<KRow> = data
        .per_k
        .iter()
        .map(|(k, eff, ds)| {
            let pairs: Vec<(f64, f64)> = ds.iter().copied().zip(data.accuracies.iter().copied()).collect();
            KRow {
                k: *k,
                effective_k: *eff,
                pearson_raw: crate::stats::pearson(ds, &data.accuracies).ok(),
                pearson_binned: crate::stats::bin_random(&pairs, opts.bin_size, opts.bin_seed)
                    .ok()
                    .and_then(|b| b.pearson().ok()),
                bin_seed: opts.bin_seed,
                n_bins: 0,
            }
        })
        .collect();
    let best = best_k_index(&rows);
    let failures: Vec<bool> = data.accuracies.iter().map(|a| is_failure(*a)).collect();
    let mut report = failure_prediction(&data.per_k[best].2, &failures, split_seed)?;
    report.feature = feature;
    report.k = Some(data.per_k[best].0);
    report.metric = Some(data.metric);
    report.qtype = opts.qtype;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repeat(values: &[f64], times: usize) -> Vec<f64> {
        values.iter().flat_map(|v| std::iter::repeat(*v).take(times)).collect()
    }

    #[test]
    fn separable_distances() {
        let distances = repeat(&[10.0, 11.0, 12.0, 1.0, 2.0, 3.0], 5);
        let failures: Vec<bool> = distances.iter().map(|d| *d >= 10.0).collect();
        let r = failure_prediction(&distances, &failures, 4).unwrap();
        let t = r.threshold.unwrap();
        assert!(t > 3.0 && t < 10.0, "{t}");
        assert_eq!(r.failure_recall, Some(1.0));
        assert_eq!(r.failure_precision, Some(1.0));
        assert_eq!(r.balanced_accuracy, Some(1.0));
        assert_eq!(r.predicted_failure_fraction_of_mistakes, Some(1.0));
    }

    #[test]
    fn six_point_example_with_lowered_minimum() {
        let r = failure_prediction_min(&[10.0, 11.0, 12.0, 1.0, 2.0, 3.0], &[true, true, true, false, false, false], 1, 2);
        let r = r.unwrap();
        if let Some(t) = r.threshold {
            assert!(t > 3.0 && t < 10.0);
        }
    }

    #[test]
    fn identical_distances_are_uninformative() {
        let distances = vec![5.0; 40];
        let failures: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let r = failure_prediction(&distances, &failures, 9).unwrap();
        assert_eq!(r.balanced_accuracy, Some(0.5));
    }

    #[test]
    fn single_class_fit_reports_no_threshold() {
        let r = failure_prediction(&[1.0; 30], &[false; 30], 0).unwrap();
        assert_eq!(r.threshold, None);
        assert!(r.note.is_some());
    }

    #[test]
    fn too_few_instances() {
        assert!(failure_prediction(&[1.0; 5], &[true; 5], 0).is_err());
    }
}
