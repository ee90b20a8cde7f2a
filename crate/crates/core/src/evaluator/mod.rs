//! Ranking evaluation restricted to each user's explicitly rated test items,
//! cross-validation splits and the cold-start slice.

mod metrics;
mod split;

pub use metrics::{item_coverage, metrics_at_k, RankMetrics};
pub use split::{kfold_split, Fold};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Interaction, ItemId, UserId};
use crate::model::TrainedModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k must be positive")]
    InvalidK,
    #[error("user has no relevant items")]
    NoRelevantItems,
    #[error("user {0} unknown to the model")]
    UnknownUser(UserId),
    #[error("item {0} unknown to the model")]
    UnknownItem(ItemId),
    #[error("{have} interactions cannot fill {folds} folds")]
    TooFewInteractions { have: usize, folds: usize },
    #[error("invalid evaluation configuration: {0}")]
    Config(String),
}

/// Anything that can score a (user, item) pair.
pub trait Scorer {
    fn knows_user(&self, user: UserId) -> bool;
    fn score(&self, user: UserId, item: ItemId) -> Option<f64>;
}

impl Scorer for TrainedModel {
    fn knows_user(&self, user: UserId) -> bool {
        self.node_index.user_node(user).is_some()
    }

    fn score(&self, user: UserId, item: ItemId) -> Option<f64> {
        self.score_pair(user, item)
    }
}

/// Scores every item by its number of positive training ratings.
#[derive(Debug, Clone, Default)]
pub struct PopularityScorer {
    counts: HashMap<ItemId, usize>,
}

impl PopularityScorer {
    pub fn new(train: &[Interaction]) -> Self {
        let mut counts = HashMap::new();
        for it in train.iter().filter(|i| i.rating >= 4) {
            *counts.entry(it.item_id).or_insert(0) += 1;
        }
        Self { counts }
    }
}

impl Scorer for PopularityScorer {
    fn knows_user(&self, _user: UserId) -> bool {
        true
    }

    fn score(&self, _user: UserId, item: ItemId) -> Option<f64> {
        Some(self.counts.get(&item).copied().unwrap_or(0) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_values: Vec<usize>,
    /// Ratings at or above this count as relevant.
    pub relevance_threshold: u8,
    /// Cold-start users have strictly fewer training interactions than this
    /// (rating-3 interactions excluded).
    pub cold_start_max: usize,
    pub folds: usize,
    pub split_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_values: vec![5, 10, 20],
            relevance_threshold: 4,
            cold_start_max: 5,
            folds: 5,
            split_seed: 2024,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(EvalError::Config("k values must be positive".into()));
        }
        if !self.k_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(EvalError::Config("k values must be strictly ascending".into()));
        }
        if self.folds < 2 {
            return Err(EvalError::Config("at least two folds are required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slice {
    All,
    ColdStart,
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slice::All => "all",
            Slice::ColdStart => "cold_start",
        })
    }
}

/// Means over evaluated users at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMetrics {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub map: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub slice: Slice,
    pub users_evaluated: usize,
    /// Empty when no user could be evaluated.
    pub per_k: BTreeMap<usize, KMetrics>,
}

/// Candidates sorted by descending score, ties by ascending item id.
pub fn rank_test_items(
    scorer: &dyn Scorer,
    user: UserId,
    test_items: &[ItemId],
) -> Result<Vec<ItemId>, EvalError> {
    if !scorer.knows_user(user) {
        return Err(EvalError::UnknownUser(user));
    }
    let mut scored = test_items
        .iter()
        .map(|&i| scorer.score(user, i).map(|s| (i, s)).ok_or(EvalError::UnknownItem(i)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

/// Users with fewer than `max` non-neutral training interactions.
pub fn cold_start_users(train: &[Interaction], all_users: &[UserId], max: usize) -> HashSet<UserId> {
    let mut counts: HashMap<UserId, usize> = HashMap::new();
    for it in train.iter().filter(|i| i.rating != 3) {
        *counts.entry(it.user_id).or_insert(0) += 1;
    }
    all_users
        .iter()
        .copied()
        .filter(|u| counts.get(u).copied().unwrap_or(0) < max)
        .collect()
}

/// Ranks each user's rated test items and averages the metrics over users
/// with at least one relevant test item.
pub fn evaluate(
    scorer: &dyn Scorer,
    test: &[Interaction],
    train: &[Interaction],
    config: &EvalConfig,
    slice: Slice,
    catalog_size: usize,
) -> Result<MetricsReport, EvalError> {
    config.validate()?;
    let mut by_user: BTreeMap<UserId, Vec<&Interaction>> = BTreeMap::new();
    for it in test {
        by_user.entry(it.user_id).or_default().push(it);
    }
    let cold = match slice {
        Slice::All => None,
        Slice::ColdStart => {
            let users: Vec<UserId> = by_user.keys().copied().collect();
            Some(cold_start_users(train, &users, config.cold_start_max))
        }
    };

    let mut sums: BTreeMap<usize, [f64; 4]> = config.k_values.iter().map(|&k| (k, [0.0; 4])).collect();
    let mut topk: BTreeMap<usize, Vec<Vec<ItemId>>> =
        config.k_values.iter().map(|&k| (k, Vec::new())).collect();
    let mut users = 0usize;
    for (&user, rated) in &by_user {
        if cold.as_ref().is_some_and(|c| !c.contains(&user)) {
            continue;
        }
        let relevant: HashSet<ItemId> = rated
            .iter()
            .filter(|i| i.rating >= config.relevance_threshold)
            .map(|i| i.item_id)
            .collect();
        if relevant.is_empty() {
            continue;
        }
        let candidates: Vec<ItemId> = rated.iter().map(|i| i.item_id).collect();
        let ranked = rank_test_items(scorer, user, &candidates)?;
        users += 1;
        for &k in &config.k_values {
            let m = metrics_at_k(&ranked, &relevant, k)?;
            let s = sums.get_mut(&k).unwrap();
            s[0] += m.precision;
            s[1] += m.recall;
            s[2] += m.ndcg;
            s[3] += m.average_precision;
            topk.get_mut(&k)
                .unwrap()
                .push(ranked[..k.min(ranked.len())].to_vec());
        }
    }

    let per_k = if users == 0 {
        BTreeMap::new()
    } else {
        let n = users as f64;
        sums.into_iter()
            .map(|(k, s)| {
                (
                    k,
                    KMetrics {
                        precision: s[0] / n,
                        recall: s[1] / n,
                        ndcg: s[2] / n,
                        map: s[3] / n,
                        coverage: item_coverage(&topk[&k], catalog_size),
                    },
                )
            })
            .collect()
    };
    Ok(MetricsReport {
        slice,
        users_evaluated: users,
        per_k,
    })
}

/// Averages reports of one slice across folds, skipping empty ones. The
/// result's `users_evaluated` is the total over all folds.
pub fn mean_report(reports: &[&MetricsReport]) -> Option<MetricsReport> {
    let first = reports.first()?;
    let present: Vec<&&MetricsReport> = reports.iter().filter(|r| r.users_evaluated > 0).collect();
    let mut per_k = BTreeMap::new();
    if !present.is_empty() {
        let n = present.len() as f64;
        for &k in first.per_k.keys().chain(present[0].per_k.keys()) {
            if per_k.contains_key(&k) {
                continue;
            }
            let mut acc = KMetrics {
                precision: 0.0,
                recall: 0.0,
                ndcg: 0.0,
                map: 0.0,
                coverage: 0.0,
            };
            for r in &present {
                let m = r.per_k[&k];
                acc.precision += m.precision / n;
                acc.recall += m.recall / n;
                acc.ndcg += m.ndcg / n;
                acc.map += m.map / n;
                acc.coverage += m.coverage / n;
            }
            per_k.insert(k, acc);
        }
    }
    Some(MetricsReport {
        slice: first.slice,
        users_evaluated: reports.iter().map(|r| r.users_evaluated).sum(),
        per_k,
    })
}

pub const TSV_HEADER: &str = "fold\tslice\tk\tprecision\trecall\tndcg\tmap\tcoverage\tusers";

/// One row per K: `fold<TAB>slice<TAB>k<TAB>precision<TAB>recall<TAB>ndcg<TAB>map<TAB>coverage<TAB>users`.
/// Empty reports produce a single row with `NA` metrics.
pub fn write_report_tsv<W: Write>(mut w: W, fold: &str, report: &MetricsReport, k_values: &[usize]) -> io::Result<()> {
    for &k in k_values {
        match report.per_k.get(&k) {
            Some(m) => writeln!(
                w,
                "{fold}\t{}\t{k}\t{}\t{}\t{}\t{}\t{}\t{}",
                report.slice, m.precision, m.recall, m.ndcg, m.map, m.coverage, report.users_evaluated
            )?,
            None => writeln!(
                w,
                "{fold}\t{}\t{k}\tNA\tNA\tNA\tNA\tNA\t{}",
                report.slice, report.users_evaluated
            )?,
        }
    }
    Ok(())
}

/// Human-readable `key=value` lines.
pub fn write_report_text<W: Write>(mut w: W, label: &str, report: &MetricsReport) -> io::Result<()> {
    writeln!(w, "[{label}]")?;
    writeln!(w, "slice={}", report.slice)?;
    writeln!(w, "users_evaluated={}", report.users_evaluated)?;
    if report.per_k.is_empty() {
        writeln!(w, "metrics=absent")?;
    }
    for (k, m) in &report.per_k {
        writeln!(w, "precision@{k}={:.6}", m.precision)?;
        writeln!(w, "recall@{k}={:.6}", m.recall)?;
        writeln!(w, "ndcg@{k}={:.6}", m.ndcg)?;
        writeln!(w, "map@{k}={:.6}", m.map)?;
        writeln!(w, "coverage@{k}={:.6}", m.coverage)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ByRating(HashMap<(UserId, ItemId), f64>);

    impl Scorer for ByRating {
        fn knows_user(&self, u: UserId) -> bool {
            self.0.keys().any(|(x, _)| *x == u)
        }
        fn score(&self, u: UserId, i: ItemId) -> Option<f64> {
            self.0.get(&(u, i)).copied()
        }
    }

    #[test]
    fn ranking_ties_and_permutation() {
        let s = ByRating([((1, 5), 1.0), ((1, 3), 1.0), ((1, 9), 2.0)].into_iter().collect());
        assert_eq!(rank_test_items(&s, 1, &[5, 3, 9]).unwrap(), vec![9, 3, 5]);
        assert_eq!(rank_test_items(&s, 1, &[9, 5, 3]).unwrap(), vec![9, 3, 5]);
        assert_eq!(rank_test_items(&s, 1, &[5]).unwrap(), vec![5]);
        assert!(matches!(rank_test_items(&s, 2, &[5]), Err(EvalError::UnknownUser(2))));
    }

    #[test]
    fn users_without_relevant_items_are_skipped() {
        let test = vec![
            Interaction::new(1, 1, 5, 0),
            Interaction::new(1, 2, 1, 0),
            Interaction::new(2, 1, 2, 0),
        ];
        let s = ByRating(test.iter().map(|i| ((i.user_id, i.item_id), i.rating as f64)).collect());
        let r = evaluate(&s, &test, &[], &EvalConfig::default(), Slice::All, 10).unwrap();
        assert_eq!(r.users_evaluated, 1);
        assert_eq!(r.per_k[&5].precision, 0.5);
        assert_eq!(r.per_k[&5].ndcg, 1.0);
        assert_eq!(r.per_k[&5].coverage, 0.2);
    }

    #[test]
    fn empty_slice_reports_absent_metrics() {
        let test = vec![Interaction::new(1, 1, 5, 0)];
        let train: Vec<_> = (10..20).map(|i| Interaction::new(1, i, 4, 0)).collect();
        let s = ByRating([((1, 1), 1.0)].into_iter().collect());
        let r = evaluate(&s, &test, &train, &EvalConfig::default(), Slice::ColdStart, 20).unwrap();
        assert_eq!(r.users_evaluated, 0);
        assert!(r.per_k.is_empty());
        let mut out = Vec::new();
        write_report_tsv(&mut out, "0", &r, &[5]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0\tcold_start\t5\tNA\tNA\tNA\tNA\tNA\t0\n");
    }

    #[test]
    fn cold_start_ignores_rating_three() {
        let train = vec![
            Interaction::new(1, 1, 3, 0),
            Interaction::new(1, 2, 3, 0),
            Interaction::new(1, 3, 3, 0),
            Interaction::new(1, 4, 3, 0),
            Interaction::new(1, 5, 3, 0),
            Interaction::new(1, 6, 4, 0),
        ];
        let cold = cold_start_users(&train, &[1, 2], 5);
        assert!(cold.contains(&1) && cold.contains(&2));
    }

    #[test]
    fn popularity_counts_positive_ratings() {
        let p = PopularityScorer::new(&[
            Interaction::new(1, 1, 5, 0),
            Interaction::new(2, 1, 4, 0),
            Interaction::new(3, 2, 2, 0),
        ]);
        assert_eq!(p.score(9, 1), Some(2.0));
        assert_eq!(p.score(9, 2), Some(0.0));
    }

    #[test]
    fn config_validation() {
        let mut c = EvalConfig {
            k_values: vec![10, 5],
            ..EvalConfig::default()
        };
        assert!(c.validate().is_err());
        c.k_values = vec![];
        assert!(c.validate().is_err());
    }
}
