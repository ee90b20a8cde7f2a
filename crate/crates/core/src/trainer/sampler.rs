use std::collections::HashSet;

use rand::Rng;

use super::TrainError;
use crate::graph::{BipartiteGraph, Sign};

/// Per-user item sets used to draw negatives. Item sets hold node indices.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    num_users: usize,
    num_items: usize,
    positives: Vec<HashSet<usize>>,
    explicit_negatives: Vec<Vec<usize>>,
    /// Items the user rated 3; never drawn from the unobserved pool.
    neutral: Vec<HashSet<usize>>,
}

impl NegativeSampler {
    /// `neutral` lists (user node, item node) pairs rated 3 in training.
    pub fn new(graph: &BipartiteGraph, neutral: &[(usize, usize)]) -> Self {
        let u = graph.num_users();
        let mut positives = vec![HashSet::new(); u];
        let mut explicit_negatives = vec![Vec::new(); u];
        for e in graph.edges() {
            match e.sign {
                Sign::Positive => {
                    positives[e.user_node].insert(e.item_node);
                }
                Sign::Negative => explicit_negatives[e.user_node].push(e.item_node),
            }
        }
        let mut neutral_sets = vec![HashSet::new(); u];
        for &(user, item) in neutral {
            if user < u {
                neutral_sets[user].insert(item);
            }
        }
        Self {
            num_users: u,
            num_items: graph.num_items(),
            positives,
            explicit_negatives,
            neutral: neutral_sets,
        }
    }

    pub fn is_positive(&self, user: usize, item: usize) -> bool {
        self.positives[user].contains(&item)
    }

    pub fn explicit_negatives(&self, user: usize) -> &[usize] {
        &self.explicit_negatives[user]
    }

    fn excluded(&self, user: usize, item: usize) -> bool {
        self.positives[user].contains(&item) || self.neutral[user].contains(&item)
    }

    /// With probability `epsilon_neg` (and at least one explicit negative) a
    /// uniform explicit negative; otherwise a uniform item that the user
    /// neither liked nor rated 3.
    pub fn sample<R: Rng>(&self, user: usize, rng: &mut R, epsilon_neg: f64) -> Result<usize, TrainError> {
        if user >= self.num_users {
            return Err(TrainError::Sampling(format!("node {user} is not a user")));
        }
        let negs = &self.explicit_negatives[user];
        if !negs.is_empty() && rng.random::<f64>() < epsilon_neg {
            return Ok(negs[rng.random_range(0..negs.len())]);
        }
        let first = self.num_users;
        let blocked = self.positives[user].union(&self.neutral[user]).count();
        let available = self.num_items - blocked.min(self.num_items);
        if available == 0 {
            return Err(TrainError::Sampling(format!(
                "user node {user} has no item outside its positives"
            )));
        }
        if available * 4 >= self.num_items {
            loop {
                let item = first + rng.random_range(0..self.num_items);
                if !self.excluded(user, item) {
                    return Ok(item);
                }
            }
        }
        let k = rng.random_range(0..available);
        Ok((first..first + self.num_items)
            .filter(|&i| !self.excluded(user, i))
            .nth(k)
            .expect("available count matches"))
    }
}
