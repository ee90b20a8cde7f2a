//! Ranking metrics on a hand-made list, then a popularity baseline evaluated
//! over five cross-validation folds of the synthetic ratings.
//!
//! ```text
//! cargo run -p gatrec --example evaluate_ranking
//! ```

use std::collections::HashSet;

use gatrec::evaluator::{evaluate, kfold_split, mean_report, metrics_at_k, write_report_text, EvalConfig, PopularityScorer, Slice};
use gatrec::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let relevant = HashSet::from([7, 9]);
    for k in [1, 2, 3] {
        let m = metrics_at_k(&[7, 4, 9], &relevant, k)?;
        println!(
            "k={k} precision {:.4} recall {:.4} ndcg {:.4} ap {:.4}",
            m.precision, m.recall, m.ndcg, m.average_precision
        );
    }

    let data = generate(&SyntheticConfig::default());
    let config = EvalConfig::default();
    let mut all = Vec::new();
    let mut cold = Vec::new();
    for fold in kfold_split(&data.interactions, config.folds, config.split_seed)? {
        let pop = PopularityScorer::new(&fold.train);
        all.push(evaluate(&pop, &fold.test, &fold.train, &config, Slice::All, data.items.len())?);
        cold.push(evaluate(&pop, &fold.test, &fold.train, &config, Slice::ColdStart, data.items.len())?);
    }
    let out = &mut std::io::stdout().lock();
    write_report_text(&mut *out, "popularity", &mean_report(&all.iter().collect::<Vec<_>>()).unwrap())?;
    write_report_text(&mut *out, "popularity", &mean_report(&cold.iter().collect::<Vec<_>>()).unwrap())?;
    Ok(())
}
