use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffles with `seed` and cuts into `folds` parts whose sizes differ by at
/// most one. Fold `k` tests on part `k` and trains on the rest; both sides keep
/// the original input order.
pub fn kfold_split<T: Clone>(items: &[T], folds: usize, seed: u64) -> Result<Vec<Fold<T>>, EvalError> {
    if folds < 2 {
        return Err(EvalError::Config("at least two folds are required".into()));
    }
    if items.len() < folds {
        return Err(EvalError::TooFewInteractions {
            have: items.len(),
            folds,
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut assignment = vec![0usize; items.len()];
    let base = items.len() / folds;
    let extra = items.len() % folds;
    let mut pos = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        for &idx in &order[pos..pos + size] {
            assignment[idx] = f;
        }
        pos += size;
    }

    Ok((0..folds)
        .map(|f| {
            let mut fold = Fold {
                train: Vec::with_capacity(items.len() - base),
                test: Vec::with_capacity(base + 1),
            };
            for (item, &a) in items.iter().zip(&assignment) {
                if a == f {
                    fold.test.push(item.clone());
                } else {
                    fold.train.push(item.clone());
                }
            }
            fold
        })
        .collect())
}
