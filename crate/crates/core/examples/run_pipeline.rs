//! Runs the whole offline pipeline (ingest, profiles, embeddings, five folds
//! of training and evaluation) with a short training budget.
//!
//! ```text
//! cargo run --release -p gatrec --example run_pipeline [-- EPOCHS]
//! ```

use std::path::Path;

use gatrec::config::{Overrides, RunConfig};
use gatrec::evaluator::write_report_text;
use gatrec::pipeline::Pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let work = std::env::temp_dir().join(format!("gatrec-pipeline-{}", std::process::id()));
    let mut cfg = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/run.conf"))?;
    cfg.apply(&Overrides {
        offline: true,
        out_dir: Some(work.join("out")),
        ..Overrides::default()
    });
    cfg.cache_dir = work.join("cache");
    cfg.train.max_epochs = epochs;

    let report = Pipeline::from_config(cfg)?.run()?;
    for f in &report.folds {
        println!("fold {}: {} epochs, ndcg@10 {:.4}", f.fold, f.model.meta.epochs_run, f.all.per_k[&10].ndcg);
    }
    let out = &mut std::io::stdout().lock();
    write_report_text(&mut *out, "mean", &report.mean_all)?;
    write_report_text(&mut *out, "mean", &report.mean_cold)?;
    println!("outputs in {}", work.display());
    Ok(())
}
