use std::collections::{BTreeSet, HashSet};

use super::EvalError;
use crate::dataset::ItemId;

/// Ranking quality of one list at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankMetrics {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub average_precision: f64,
}

/// Precision, recall, NDCG and average precision of `ranked` at cutoff `k`.
///
/// The effective cutoff is `min(k, ranked.len())`. Average precision is
/// normalized by `min(k, |relevant|)` so it stays within [0, 1].
pub fn metrics_at_k(
    ranked: &[ItemId],
    relevant: &HashSet<ItemId>,
    k: usize,
) -> Result<RankMetrics, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if relevant.is_empty() {
        return Err(EvalError::NoRelevantItems);
    }
    let cutoff = k.min(ranked.len());
    let mut hits = 0usize;
    let mut dcg = 0.0;
    let mut precision_sum = 0.0;
    for (r, item) in ranked[..cutoff].iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            dcg += 1.0 / ((r + 2) as f64).log2();
            precision_sum += hits as f64 / (r + 1) as f64;
        }
    }
    let ideal = cutoff.min(relevant.len());
    let idcg: f64 = (0..ideal).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    Ok(RankMetrics {
        precision: if cutoff == 0 { 0.0 } else { hits as f64 / cutoff as f64 },
        recall: hits as f64 / relevant.len() as f64,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        average_precision: precision_sum / k.min(relevant.len()) as f64,
    })
}

/// Fraction of the catalog appearing in at least one list.
pub fn item_coverage(lists: &[Vec<ItemId>], catalog_size: usize) -> f64 {
    if catalog_size == 0 {
        return 0.0;
    }
    let distinct: BTreeSet<ItemId> = lists.iter().flatten().copied().collect();
    distinct.len() as f64 / catalog_size as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(ids: &[ItemId]) -> HashSet<ItemId> {
        ids.iter().copied().collect()
    }

    #[test]
    fn perfect_single() {
        let m = metrics_at_k(&[7], &rel(&[7]), 1).unwrap();
        assert_eq!(
            m,
            RankMetrics {
                precision: 1.0,
                recall: 1.0,
                ndcg: 1.0,
                average_precision: 1.0
            }
        );
    }

    #[test]
    fn ndcg_second_position() {
        let m = metrics_at_k(&[1, 2], &rel(&[2]), 2).unwrap();
        // 1 / log2(3)
        assert!((m.ndcg - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert!((m.ndcg - 0.630930).abs() < 1e-6);
    }

    #[test]
    fn average_precision_hand_value() {
        let m = metrics_at_k(&[1, 2, 3], &rel(&[1, 3]), 3).unwrap();
        assert!((m.average_precision - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn short_lists_use_effective_cutoff() {
        let m = metrics_at_k(&[4, 5], &rel(&[5]), 10).unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(metrics_at_k(&[1], &rel(&[1]), 0), Err(EvalError::InvalidK)));
        assert!(matches!(metrics_at_k(&[1], &rel(&[]), 1), Err(EvalError::NoRelevantItems)));
    }

    #[test]
    fn coverage_counts() {
        assert_eq!(item_coverage(&[vec![1, 2], vec![2, 1]], 4), 0.5);
        assert_eq!(item_coverage(&[vec![1, 2], vec![3, 4]], 4), 1.0);
        assert_eq!(item_coverage(&[], 4), 0.0);
    }
}
