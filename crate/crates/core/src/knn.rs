//! Exact brute-force k-nearest-neighbor search.
//!
//! Every query scans the whole training matrix, so results are exact. Ties are
//! broken by ascending training index, which makes the output identical across
//! runs, platforms and thread counts.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::VectorTable;

/// Rows above which a single query's distances are computed in parallel.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            _ => Err(format!("unknown metric {s:?} (expected euclidean or cosine)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrain,
    #[error("k must be at least 1")]
    ZeroK,
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

fn euclidean(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Cosine distance from precomputed parts. Zero-norm operands give 1.0 and
/// report themselves as degenerate.
fn cosine_from_parts(dot: f64, norm_u: f64, norm_v: f64) -> (f64, bool) {
    if norm_u == 0.0 || norm_v == 0.0 {
        return (1.0, true);
    }
    ((1.0 - dot / (norm_u * norm_v)).clamp(0.0, 2.0), false)
}

/// Distance plus a flag set when a cosine operand had zero norm.
pub fn distance_flagged(u: &[f64], v: &[f64], metric: Metric) -> Result<(f64, bool), KnnError> {
    if u.len() != v.len() {
        return Err(KnnError::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    Ok(match metric {
        Metric::Euclidean => (euclidean(u, v), false),
        Metric::Cosine => cosine_from_parts(dot(u, v), norm(u), norm(v)),
    })
}

pub fn distance(u: &[f64], v: &[f64], metric: Metric) -> Result<f64, KnnError> {
    distance_flagged(u, v, metric).map(|(d, _)| d)
}

/// Row-major training matrix with cached row norms.
#[derive(Debug, Clone)]
pub struct TrainMatrix {
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl TrainMatrix {
    pub fn new(dim: usize) -> Self {
        TrainMatrix { dim, data: Vec::new(), norms: Vec::new() }
    }

    pub fn from_rows<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, KnnError> {
        let mut m = TrainMatrix::new(dim);
        for r in rows {
            m.push(r)?;
        }
        Ok(m)
    }

    pub fn from_table(table: &VectorTable) -> Self {
        TrainMatrix::from_rows(table.dim(), table.iter().map(|(_, v)| v)).expect("table rows share one dimension")
    }

    pub fn push(&mut self, row: &[f64]) -> Result<(), KnnError> {
        if row.len() != self.dim {
            return Err(KnnError::DimensionMismatch { expected: self.dim, found: row.len() });
        }
        self.data.extend_from_slice(row);
        self.norms.push(norm(row));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn row_distance(&self, query: &[f64], query_norm: f64, i: usize, metric: Metric) -> (f64, bool) {
        let row = self.row(i);
        match metric {
            Metric::Euclidean => (euclidean(query, row), false),
            Metric::Cosine => cosine_from_parts(dot(query, row), query_norm, self.norms[i]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub train_index: usize,
    pub distance: f64,
}

/// The `min(k, n)` nearest training rows, sorted by `(distance, train_index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub query_id: String,
    pub neighbors: Vec<Neighbor>,
    /// Zero-norm cosine operands encountered while scanning.
    pub degenerate_count: usize,
}

impl NeighborList {
    /// Mean distance over the first `k` neighbors (all of them if fewer).
    pub fn mean_distance(&self, k: usize) -> f64 {
        let take = k.min(self.neighbors.len());
        if take == 0 {
            return 0.0;
        }
        self.neighbors[..take].iter().map(|n| n.distance).sum::<f64>() / take as f64
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn check(query: &[f64], train: &TrainMatrix, k: usize) -> Result<(), KnnError> {
    if k == 0 {
        return Err(KnnError::ZeroK);
    }
    if train.is_empty() {
        return Err(KnnError::EmptyTrain);
    }
    if query.len() != train.dim() {
        return Err(KnnError::DimensionMismatch { expected: train.dim(), found: query.len() });
    }
    Ok(())
}

fn search(query_id: &str, query: &[f64], train: &TrainMatrix, k: usize, metric: Metric) -> NeighborList {
    let query_norm = norm(query);
    let scan = |i: usize| {
        let (d, degenerate) = train.row_distance(query, query_norm, i, metric);
        ((d, i), degenerate)
    };
    let scored: Vec<((f64, usize), bool)> = if train.len() >= PAR_ROWS {
        (0..train.len()).into_par_iter().map(scan).collect()
    } else {
        (0..train.len()).map(scan).collect()
    };
    let degenerate_count = scored.iter().filter(|(_, d)| *d).count();
    let mut pairs: Vec<(f64, usize)> = scored.into_iter().map(|(p, _)| p).collect();
    let k = k.min(pairs.len());
    if k < pairs.len() {
        pairs.select_nth_unstable_by(k - 1, by_distance_then_index);
        pairs.truncate(k);
    }
    pairs.sort_unstable_by(by_distance_then_index);
    NeighborList {
        query_id: query_id.to_string(),
        neighbors: pairs.into_iter().map(|(distance, train_index)| Neighbor { train_index, distance }).collect(),
        degenerate_count,
    }
}

/// Exact top-`min(k, n)` neighbors of one query.
pub fn knn(query: &[f64], train: &TrainMatrix, k: usize, metric: Metric) -> Result<NeighborList, KnnError> {
    check(query, train, k)?;
    Ok(search("", query, train, k, metric))
}

/// Neighbors for many queries, computed in parallel and returned in query order.
pub fn knn_batch(
    queries: &[(&str, &[f64])],
    train: &TrainMatrix,
    k: usize,
    metric: Metric,
) -> Result<Vec<NeighborList>, KnnError> {
    for (_, q) in queries {
        check(q, train, k)?;
    }
    if train.is_empty() || k == 0 {
        // reached only for an empty query list
        return Ok(Vec::new());
    }
    Ok(queries.par_iter().map(|(id, q)| search(id, q, train, k, metric)).collect())
}

pub fn avg_knn_distance(query: &[f64], train: &TrainMatrix, k: usize, metric: Metric) -> Result<f64, KnnError> {
    knn(query, train, k, metric).map(|l| l.mean_distance(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> TrainMatrix {
        TrainMatrix::from_rows(rows[0].len(), rows.iter().copied()).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0], Metric::Euclidean).unwrap(), 5.0);
        assert_eq!(distance(&[1.0, 0.0], &[0.0, 1.0], Metric::Cosine).unwrap(), 1.0);
        assert!(distance(&[1.0, 1.0], &[2.0, 2.0], Metric::Cosine).unwrap().abs() < 1e-12);
        assert_eq!(
            distance(&[1.0], &[1.0, 2.0], Metric::Euclidean),
            Err(KnnError::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    #[test]
    fn zero_norm_cosine_is_flagged() {
        assert_eq!(distance_flagged(&[0.0, 0.0], &[1.0, 2.0], Metric::Cosine).unwrap(), (1.0, true));
        let train = matrix(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let l = knn(&[1.0, 0.0], &train, 2, Metric::Cosine).unwrap();
        assert_eq!(l.degenerate_count, 1);
        assert_eq!(l.neighbors[0], Neighbor { train_index: 1, distance: 0.0 });
        assert_eq!(l.neighbors[1], Neighbor { train_index: 0, distance: 1.0 });
    }

    #[test]
    fn self_match_at_k1() {
        let train = matrix(&[&[0.5, 2.0], &[3.0, 1.0], &[-1.0, 4.0]]);
        let l = knn(&[3.0, 1.0], &train, 1, Metric::Euclidean).unwrap();
        assert_eq!(l.neighbors, vec![Neighbor { train_index: 1, distance: 0.0 }]);
        assert_eq!(avg_knn_distance(&[3.0, 1.0], &train, 1, Metric::Euclidean).unwrap(), 0.0);
    }

    #[test]
    fn five_hand_placed_points() {
        // distances from the origin: 5, 1, sqrt(2), 2, 1
        let train = matrix(&[&[3.0, 4.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, -2.0], &[0.0, 1.0]]);
        let l = knn(&[0.0, 0.0], &train, 3, Metric::Euclidean).unwrap();
        let got: Vec<(usize, f64)> = l.neighbors.iter().map(|n| (n.train_index, n.distance)).collect();
        assert_eq!(got, vec![(1, 1.0), (4, 1.0), (2, 2f64.sqrt())]);
    }

    #[test]
    fn k_beyond_n_returns_everything_sorted() {
        let train = matrix(&[&[2.0], &[0.0], &[1.0]]);
        let l = knn(&[0.0], &train, 10, Metric::Euclidean).unwrap();
        let idx: Vec<usize> = l.neighbors.iter().map(|n| n.train_index).collect();
        assert_eq!(idx, vec![1, 2, 0]);
    }

    #[test]
    fn average_of_two_nearest() {
        let train = matrix(&[&[1.0], &[2.0], &[3.0]]);
        assert_eq!(avg_knn_distance(&[0.0], &train, 2, Metric::Euclidean).unwrap(), 1.5);
    }

    #[test]
    fn errors() {
        let train = matrix(&[&[1.0, 2.0]]);
        assert_eq!(knn(&[1.0, 2.0], &train, 0, Metric::Euclidean), Err(KnnError::ZeroK));
        assert_eq!(knn(&[1.0], &train, 1, Metric::Euclidean).unwrap_err(), KnnError::DimensionMismatch {
            expected: 2,
            found: 1
        });
        assert_eq!(knn(&[1.0], &TrainMatrix::new(1), 1, Metric::Euclidean), Err(KnnError::EmptyTrain));
    }

    #[test]
    fn batch_preserves_query_order() {
        let train = matrix(&[&[0.0], &[10.0]]);
        let q: Vec<(&str, &[f64])> = vec![("far", &[9.0]), ("near", &[1.0])];
        let out = knn_batch(&q, &train, 1, Metric::Euclidean).unwrap();
        assert_eq!(out[0].query_id, "far");
        assert_eq!(out[0].neighbors[0].train_index, 1);
        assert_eq!(out[1].neighbors[0].train_index, 0);
    }
}
