//! Trains the full and ablated configurations on the first folds of the bundled
//! synthetic fixture and compares NDCG@10 with an untrained model and a
//! popularity ranker.
//!
//! ```text
//! cargo run --release -p gatrec --example synthetic_benchmark [-- SEEDS [FOLDS [CONFIG]]]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use gatrec::config::{Overrides, RunConfig};
use gatrec::evaluator::{evaluate, EvalConfig, PopularityScorer, Slice};
use gatrec::model::{self, init_features, InitMode, ModelParams, TrainedModel, TrainingMeta};
use gatrec::pipeline::{Pipeline, Providers, Scope};

fn ndcg10(report: &gatrec::evaluator::MetricsReport) -> f64 {
    report.per_k[&10].ndcg
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).map_or(Ok(3), |s| s.parse())?;
    let folds: usize = args.get(2).map_or(Ok(1), |s| s.parse())?;
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let conf = args
        .get(3)
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("fixtures/synthetic/run.conf"));
    let base = RunConfig::load(&conf)?;
    let mut totals = [[0.0f64; 3]; 2];
    let work = tempfile_dir();
    let eval = EvalConfig {
        k_values: vec![10],
        ..base.eval.clone()
    };

    for seed in 1..=seeds {
        for ablate in [false, true] {
            let mut cfg = base.clone();
            cfg.apply(&Overrides {
                seed: Some(seed),
                ablate,
                out_dir: Some(work.join("out")),
                ..Overrides::default()
            });
            cfg.cache_dir = work.join("cache");
            cfg.eval = eval.clone();
            let providers = Providers::offline(&cfg)?;
            let pipeline = Pipeline::new(cfg, providers);
            let dataset = pipeline.ingest()?;
            let catalog = dataset.item_ids.len();
            for k in 0..folds {
            let (train, test) = pipeline.scoped(&dataset, Scope::Fold(k))?;

            let started = Instant::now();
            let fold = pipeline.run_fold(&dataset, k)?;
            let elapsed = started.elapsed();

            let (graph, _) = Pipeline::graph(&train)?;
            let mode = pipeline.config.init;
            let features = if mode == InitMode::TextInit {
                let profiles = pipeline.profiles(&train, Scope::Fold(k))?;
                let table = pipeline.embeddings(&train, &profiles, Scope::Fold(k))?;
                init_features(&pipeline.config.train.model, graph.node_index(), mode, Some(&table), seed)?
            } else {
                init_features(&pipeline.config.train.model, graph.node_index(), mode, None, seed)?
            };
            let params = ModelParams::init(&pipeline.config.train.model, seed)?;
            let pass = model::forward(&graph, &params, &features, None)?;
            let untrained = TrainedModel::from_pass(&graph, params, &pass, None, TrainingMeta::default());
            let untrained = evaluate(&untrained, &test, &train.interactions, &eval, Slice::All, catalog)?;
            let pop = PopularityScorer::new(&train.interactions);
            let pop = evaluate(&pop, &test, &train.interactions, &eval, Slice::All, catalog)?;

            let h = &fold.model.meta.history;
            let row = &mut totals[usize::from(ablate)];
            row[0] += ndcg10(&fold.all);
            row[1] += ndcg10(&untrained);
            row[2] += ndcg10(&pop);
            println!(
                "seed {seed} fold {k} {:<8} epochs {:>3} loss {:.4} -> {:.4}  ndcg@10 trained {:.4} untrained {:.4} popularity {:.4}  ({:.1?})",
                if ablate { "ablated" } else { "full" },
                h.len(),
                h.first().map_or(f64::NAN, |r| r.train_loss),
                h.last().map_or(f64::NAN, |r| r.train_loss),
                ndcg10(&fold.all),
                ndcg10(&untrained),
                ndcg10(&pop),
                elapsed
            );
            }
        }
    }
    let n = (seeds as usize * folds) as f64;
    for (name, row) in ["full", "ablated"].iter().zip(totals) {
        println!(
            "mean {name:<8} trained {:.4} untrained {:.4} popularity {:.4}",
            row[0] / n,
            row[1] / n,
            row[2] / n
        );
    }
    Ok(())
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gatrec-benchmark-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}
