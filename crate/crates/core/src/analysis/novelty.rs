//! Accuracy against distance from the training set, in joint-embedding space
//! or in answer space.

use serde::{Deserialize, Serialize};

use super::{predict, AnalysisError, AnalysisOptions};
use crate::adapter::{Perturbation, Session};
use crate::data::{answer_embedding, AnswerEmbedding, Dataset, Instance, QuestionType};
use crate::knn::{distance_flagged, knn_batch, Metric, NeighborList, TrainMatrix};
use crate::stats::{bin_random, pearson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyFeature {
    QiDistance,
    AnswerDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    /// `k` clamped to the train split size.
    pub effective_k: usize,
    pub pearson_raw: Option<f64>,
    pub pearson_binned: Option<f64>,
    pub bin_seed: u64,
    pub n_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyPoint {
    pub instance_id: String,
    pub avg_knn_distance: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub feature: NoveltyFeature,
    /// Metric of the joint-embedding neighbor search.
    pub metric: Metric,
    pub qtype: Option<QuestionType>,
    pub n_train: usize,
    pub n_test: usize,
    pub per_k: Vec<KRow>,
    pub best_k: usize,
    /// Distances at `best_k`.
    pub per_instance: Vec<NoveltyPoint>,
    /// `(mean distance, mean accuracy)` of each random bin at `best_k`.
    pub binned: Vec<(f64, f64)>,
    /// Zero-norm operands met by cosine distances.
    pub degenerate_count: usize,
    /// Test instances whose answer, or a neighbor's answer, had no word vector.
    pub oov_count: Option<usize>,
}

/// Distances for every requested k, shared with failure prediction.
pub(crate) struct NoveltyData<'d> {
    pub instances: Vec<&'d Instance>,
    pub accuracies: Vec<f64>,
    pub n_train: usize,
    pub metric: Metric,
    /// `(k, effective_k, per-instance distance)`.
    pub per_k: Vec<(usize, usize, Vec<f64>)>,
    pub degenerate_count: usize,
    pub oov_count: Option<usize>,
}

fn check_grid(k_grid: &[usize]) -> Result<(), AnalysisError> {
    if k_grid.is_empty() || k_grid.contains(&0) {
        return Err(AnalysisError::Invalid("k grid must be nonempty and positive".into()));
    }
    Ok(())
}

fn effective(k: usize, n_train: usize) -> usize {
    if k > n_train {
        log::warn!("k={k} exceeds the {n_train} train instances; clamping");
    }
    k.min(n_train)
}

pub(crate) fn neighbors<'d>(
    dataset: &'d Dataset,
    session: &mut Session,
    max_k: usize,
    metric: Option<Metric>,
    opts: &AnalysisOptions,
) -> Result<(Vec<&'d Instance>, Vec<f64>, Vec<NeighborList>, Metric, usize), AnalysisError> {
    let caps = session.capabilities().clone();
    if !caps.has_embedding {
        return Err(AnalysisError::Capability(format!(
            "adapter {} does not expose joint embeddings",
            session.identity()
        )));
    }
    let metric = metric.unwrap_or(caps.preferred_metric);
    let train = dataset.train();
    if train.is_empty() {
        return Err(AnalysisError::NoTrainInstances);
    }
    let test = opts.test_instances(dataset)?;
    let train_preds = predict(session, &train, Perturbation::Full, true)?;
    let test_preds = predict(session, &test, Perturbation::Full, true)?;
    let dim = caps.embedding_dim.expect("validated capabilities");
    let matrix = TrainMatrix::from_rows(dim, train_preds.iter().map(|p| p.embedding.as_deref().expect("requested")))?;
    let queries: Vec<(&str, &[f64])> = test_preds
        .iter()
        .map(|p| (p.instance_id.as_str(), p.embedding.as_deref().expect("requested")))
        .collect();
    let lists = knn_batch(&queries, &matrix, max_k.min(train.len()), metric)?;
    let accuracies = test.iter().zip(&test_preds).map(|(i, p)| opts.accuracy_of(&p.answer, i)).collect();
    Ok((test, accuracies, lists, metric, train.len()))
}

pub(crate) fn qi_distances<'d>(
    dataset: &'d Dataset,
    session: &mut Session,
    k_grid: &[usize],
    metric: Option<Metric>,
    opts: &AnalysisOptions,
) -> Result<NoveltyData<'d>, AnalysisError> {
    check_grid(k_grid)?;
    let max_k = *k_grid.iter().max().expect("nonempty");
    let (instances, accuracies, lists, metric, n_train) = neighbors(dataset, session, max_k, metric, opts)?;
    let per_k = k_grid
        .iter()
        .map(|&k| {
            let eff = effective(k, n_train);
            (k, eff, lists.iter().map(|l| l.mean_distance(eff)).collect())
        })
        .collect();
    let degenerate_count = lists.iter().map(|l| l.degenerate_count).sum();
    Ok(NoveltyData { instances, accuracies, n_train, metric, per_k, degenerate_count, oov_count: None })
}

pub(crate) fn answer_distances<'d>(
    dataset: &'d Dataset,
    session: &mut Session,
    k_grid: &[usize],
    metric: Option<Metric>,
    opts: &AnalysisOptions,
) -> Result<NoveltyData<'d>, AnalysisError> {
    check_grid(k_grid)?;
    let words = dataset
        .word_vectors
        .as_ref()
        .ok_or_else(|| AnalysisError::Capability("answer novelty needs word vectors".into()))?;
    let max_k = *k_grid.iter().max().expect("nonempty");
    let (instances, accuracies, lists, metric, n_train) = neighbors(dataset, session, max_k, metric, opts)?;
    let train_answers: Vec<AnswerEmbedding> =
        dataset.train().iter().map(|i| answer_embedding(&i.gt_answer, words)).collect();
    let mut degenerate_count = 0;
    let mut oov_count = 0;
    // per instance, the distance to each neighbor's answer in rank order
    let ranked: Vec<Vec<f64>> = instances
        .iter()
        .zip(&lists)
        .map(|(inst, list)| {
            let own = answer_embedding(&inst.gt_answer, words);
            let mut oov = own.oov;
            let ds = list
                .neighbors
                .iter()
                .map(|n| {
                    let other = &train_answers[n.train_index];
                    oov |= other.oov;
                    let (d, degenerate) = distance_flagged(&own.vector, &other.vector, Metric::Cosine).expect("same dim");
                    degenerate_count += usize::from(degenerate);
                    d
                })
                .collect();
            oov_count += usize::from(oov);
            ds
        })
        .collect();
    let per_k = k_grid
        .iter()
        .map(|&k| {
            let eff = effective(k, n_train);
            (k, eff, ranked.iter().map(|ds| ds[..eff].iter().sum::<f64>() / eff as f64).collect())
        })
        .collect();
    Ok(NoveltyData { instances, accuracies, n_train, metric, per_k, degenerate_count, oov_count: Some(oov_count) })
}

fn report(data: NoveltyData, feature: NoveltyFeature, opts: &AnalysisOptions) -> NoveltyReport {
    let per_k: Vec<KRow> = data
        .per_k
        .iter()
        .map(|(k, eff, ds)| {
            let pairs: Vec<(f64, f64)> = ds.iter().copied().zip(data.accuracies.iter().copied()).collect();
            let binned = bin_random(&pairs, opts.bin_size, opts.bin_seed).ok();
            KRow {
                k: *k,
                effective_k: *eff,
                pearson_raw: pearson(ds, &data.accuracies).ok(),
                pearson_binned: binned.as_ref().and_then(|b| b.pearson().ok()),
                bin_seed: opts.bin_seed,
                n_bins: binned.map_or(0, |b| b.bins.len()),
            }
        })
        .collect();
    let best = best_k_index(&per_k);
    let pairs: Vec<(f64, f64)> = data.per_k[best].2.iter().copied().zip(data.accuracies.iter().copied()).collect();
    let binned = bin_random(&pairs, opts.bin_size, opts.bin_seed)
        .map(|b| b.xs().into_iter().zip(b.ys()).collect())
        .unwrap_or_default();
    let per_instance = data
        .instances
        .iter()
        .zip(&data.per_k[best].2)
        .zip(&data.accuracies)
        .map(|((i, d), a)| NoveltyPoint { instance_id: i.id.clone(), avg_knn_distance: *d, accuracy: *a })
        .collect();
    NoveltyReport {
        feature,
        metric: data.metric,
        qtype: opts.qtype,
        n_train: data.n_train,
        n_test: data.instances.len(),
        best_k: per_k[best].k,
        per_k,
        per_instance,
        binned,
        degenerate_count: data.degenerate_count,
        oov_count: data.oov_count,
    }
}

/// Index of the row with the largest |binned r|, falling back to |raw r| and
/// then to the first row. Ties keep the earlier row.
pub(crate) fn best_k_index(rows: &[KRow]) -> usize {
    let pick = |f: &dyn Fn(&KRow) -> Option<f64>| {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if let Some(v) = f(r).map(f64::abs) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| i)
    };
    pick(&|r| r.pearson_binned).or_else(|| pick(&|r| r.pearson_raw)).unwrap_or(0)
}

pub fn novelty_analysis(
    dataset: &Dataset,
    session: &mut Session,
    k_grid: &[usize],
    metric: Option<Metric>,
    opts: &AnalysisOptions,
) -> Result<NoveltyReport, AnalysisError> {
    let data = qi_distances(dataset, session, k_grid, metric, opts)?;
    Ok(report(data, NoveltyFeature::QiDistance, opts))
}

/// Neighbors are found in joint-embedding space with `metric`; answers are
/// compared by cosine distance between averaged word vectors.
pub fn answer_novelty_analysis(
    dataset: &Dataset,
    session: &mut Session,
    k_grid: &[usize],
    metric: Option<Metric>,
    opts: &AnalysisOptions,
) -> Result<NoveltyReport, AnalysisError> {
    let data = answer_distances(dataset, session, k_grid, metric, opts)?;
    Ok(report(data, NoveltyFeature::AnswerDistance, opts))
}
