//! How much of the question the model uses: partial-question and POS-drop probes.

use serde::{Deserialize, Serialize};

use super::{by_qtype, fraction, predict, same_answer, AnalysisError, AnalysisOptions};
use crate::adapter::{Perturbation, Prediction, Session};
use crate::data::{Dataset, Instance, PosGroup, QuestionType};

pub const DEFAULT_PREFIX_GRID: [u8; 11] = [0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixPoint {
    pub pct: u8,
    pub fraction_same_as_full: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixBreakdown {
    pub qtype: QuestionType,
    pub n: usize,
    pub per_point: Vec<PrefixPoint>,
    pub converged_at_half: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionUnderstandingReport {
    pub qtype: Option<QuestionType>,
    pub n: usize,
    pub grid: Vec<u8>,
    pub full_accuracy: f64,
    pub per_point: Vec<PrefixPoint>,
    /// `fraction_same_as_full` at the 50% point, if the grid has one.
    pub converged_at_half: Option<f64>,
    pub per_qtype: Vec<PrefixBreakdown>,
}

fn points(
    idx: &[usize],
    grid: &[u8],
    same: &[Vec<bool>],
    acc: &[Vec<f64>],
) -> (Vec<PrefixPoint>, Option<f64>) {
    let pts: Vec<PrefixPoint> = grid
        .iter()
        .enumerate()
        .map(|(g, &pct)| PrefixPoint {
            pct,
            fraction_same_as_full: fraction(idx.iter().filter(|&&i| same[g][i]).count(), idx.len()),
            mean_accuracy: idx.iter().map(|&i| acc[g][i]).sum::<f64>() / idx.len() as f64,
        })
        .collect();
    let half = pts.iter().find(|p| p.pct == 50).map(|p| p.fraction_same_as_full);
    (pts, half)
}

/// Feeds the leading `ceil(pct * n / 100)` tokens at each grid point and
/// compares with the full-question answer. The 100% point is the full
/// prediction itself.
pub fn prefix_probe(
    dataset: &Dataset,
    session: &mut Session,
    grid: &[u8],
    opts: &AnalysisOptions,
) -> Result<QuestionUnderstandingReport, AnalysisError> {
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid.iter().any(|p| *p > 100) {
        return Err(AnalysisError::Invalid("prefix grid must be nonempty percentages in 0..=100".into()));
    }
    let test = opts.test_instances(dataset)?;
    let full = predict(session, &test, Perturbation::Full, false)?;
    let mut same = Vec::with_capacity(grid.len());
    let mut acc = Vec::with_capacity(grid.len());
    for &pct in &grid {
        let preds: Vec<Prediction> =
            if pct == 100 { full.clone() } else { predict(session, &test, Perturbation::Prefix(pct), false)? };
        same.push(preds.iter().zip(&full).map(|(p, f)| same_answer(&p.answer, &f.answer)).collect::<Vec<_>>());
        acc.push(test.iter().zip(&preds).map(|(i, p)| opts.accuracy_of(&p.answer, i)).collect::<Vec<_>>());
    }
    let all: Vec<usize> = (0..test.len()).collect();
    let (per_point, converged_at_half) = points(&all, &grid, &same, &acc);
    let per_qtype = by_qtype(&test)
        .into_iter()
        .map(|(qtype, idx)| {
            let (per_point, converged_at_half) = points(&idx, &grid, &same, &acc);
            PrefixBreakdown { qtype, n: idx.len(), per_point, converged_at_half }
        })
        .collect();
    let full_accuracy = test.iter().zip(&full).map(|(i, p)| opts.accuracy_of(&p.answer, i)).sum::<f64>() / test.len() as f64;
    Ok(QuestionUnderstandingReport {
        qtype: opts.qtype,
        n: test.len(),
        grid,
        full_accuracy,
        per_point,
        converged_at_half,
        per_qtype,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: PosGroup,
    /// 1.0 when no question contains the group.
    pub fraction_unchanged: f64,
    /// Questions containing at least one token of the group.
    pub n_questions_affected: usize,
    /// Questions without the group, left out of the denominator.
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosDropBreakdown {
    pub qtype: QuestionType,
    pub n: usize,
    pub per_group: Vec<GroupRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosDropReport {
    pub qtype: Option<QuestionType>,
    pub n: usize,
    pub per_group: Vec<GroupRow>,
    pub per_qtype: Vec<PosDropBreakdown>,
}

fn rows(idx: &[usize], groups: &[PosGroup], has: &[Vec<bool>], unchanged: &[Vec<bool>]) -> Vec<GroupRow> {
    groups
        .iter()
        .enumerate()
        .map(|(g, &group)| {
            let affected: Vec<usize> = idx.iter().copied().filter(|&i| has[g][i]).collect();
            let kept = affected.iter().filter(|&&i| unchanged[g][i]).count();
            GroupRow {
                group,
                fraction_unchanged: if affected.is_empty() { 1.0 } else { fraction(kept, affected.len()) },
                n_questions_affected: affected.len(),
                n_excluded: idx.len() - affected.len(),
            }
        })
        .collect()
}

/// Removes every token of each group in turn and counts unchanged answers
/// among the questions that contained the group.
pub fn pos_drop_probe(
    dataset: &Dataset,
    session: &mut Session,
    groups: &[PosGroup],
    opts: &AnalysisOptions,
) -> Result<PosDropReport, AnalysisError> {
    let mut groups = groups.to_vec();
    groups.sort_unstable();
    groups.dedup();
    let test = opts.test_instances(dataset)?;
    let full = predict(session, &test, Perturbation::Full, false)?;
    let mut has = Vec::with_capacity(groups.len());
    let mut unchanged = Vec::with_capacity(groups.len());
    for &group in &groups {
        let members: Vec<&Instance> = test.iter().copied().filter(|i| i.pos.contains(&group)).collect();
        let preds = predict(session, &members, Perturbation::Drop(group), false)?;
        let mut flags = vec![false; test.len()];
        let mut same = vec![true; test.len()];
        let mut it = preds.iter();
        for (n, inst) in test.iter().enumerate() {
            if inst.pos.contains(&group) {
                flags[n] = true;
                same[n] = same_answer(&it.next().expect("one prediction per member").answer, &full[n].answer);
            }
        }
        has.push(flags);
        unchanged.push(same);
    }
    let all: Vec<usize> = (0..test.len()).collect();
    let per_qtype = by_qtype(&test)
        .into_iter()
        .map(|(qtype, idx)| PosDropBreakdown { qtype, n: idx.len(), per_group: rows(&idx, &groups, &has, &unchanged) })
        .collect();
    Ok(PosDropReport { qtype: opts.qtype, n: test.len(), per_group: rows(&all, &groups, &has, &unchanged), per_qtype })
}
