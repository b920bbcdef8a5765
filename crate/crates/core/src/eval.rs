//! Full-rank top-N evaluation.

use numgrad::{Real, Tensor};

use crate::encoder::predict_scores;
use crate::graph::InteractionGraph;

/// `|top-N ∩ relevant| / |relevant|`; `None` when nothing is relevant.
pub fn recall_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let hits = ranked.iter().take(n).filter(|i| relevant.contains(i)).count();
    Some(hits as f64 / relevant.len() as f64)
}

/// Binary-relevance NDCG with gain `1 / log2(pos + 1)`, positions from 1.
pub fn ndcg_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let gain = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(p, _)| gain(p))
        .sum();
    let idcg: f64 = (0..relevant.len().min(n)).map(gain).sum();
    Some(dcg / idcg)
}

/// The `n` best items by score, skipping `masked`; ties go to the lower
/// item id.
pub fn rank_top_n(scores: &[f64], masked: &[usize], n: usize) -> Vec<usize> {
    let keyed: Vec<f64> = scores.iter().map(|&s| if s.is_nan() { f64::NEG_INFINITY } else { s }).collect();
    let mut open = vec![true; scores.len()];
    for &i in masked {
        open[i] = false;
    }
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|&i| open[i]).collect();
    let cmp = |a: &usize, b: &usize| keyed[*b].total_cmp(&keyed[*a]).then(a.cmp(b));
    let n = n.min(candidates.len());
    if n == 0 {
        return Vec::new();
    }
    if n < candidates.len() {
        candidates.select_nth_unstable_by(n - 1, cmp);
        candidates.truncate(n);
    }
    candidates.sort_unstable_by(cmp);
    candidates
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub recall: f64,
    pub ndcg: f64,
    /// Users with a non-empty test set.
    pub users: usize,
    pub n: usize,
}

/// Macro-averaged Recall@N and NDCG@N where `scores(u)` yields user `u`'s
/// score for every item.
pub fn evaluate_with(
    mut scores: impl FnMut(usize) -> Vec<f64>,
    train: &InteractionGraph,
    test: &[Vec<usize>],
    n: usize,
) -> EvalReport {
    let (mut recall, mut ndcg, mut users) = (0.0, 0.0, 0);
    for (u, relevant) in test.iter().enumerate() {
        if relevant.is_empty() {
            continue;
        }
        let ranked = rank_top_n(&scores(u), train.items_of(u), n);
        recall += recall_at_n(&ranked, relevant, n).unwrap_or(0.0);
        ndcg += ndcg_at_n(&ranked, relevant, n).unwrap_or(0.0);
        users += 1;
    }
    let denom = users.max(1) as f64;
    EvalReport {
        recall: recall / denom,
        ndcg: ndcg / denom,
        users,
        n,
    }
}

/// Scores every user against all items with inner products.
pub fn evaluate_full_rank<T: Real>(
    users: &Tensor<T>,
    items: &Tensor<T>,
    train: &InteractionGraph,
    test: &[Vec<usize>],
    n: usize,
) -> EvalReport {
    evaluate_with(
        |u| predict_scores(users.row(u), items).into_iter().map(Real::as_f64).collect(),
        train,
        test,
        n,
    )
}
