//! Trains a small model on the synthetic ratings with hashed profile and item
//! texts as initial features, then saves and reloads the checkpoint.
//!
//! ```text
//! cargo run --release -p gatrec --example train_model [-- EPOCHS]
//! ```

use gatrec::dataset::Dataset;
use gatrec::embedder::{build_embedding_table, EmbedOptions, HashingEncoder};
use gatrec::model::{init_features, InitMode, TrainedModel};
use gatrec::pipeline::Pipeline;
use gatrec::profiler::{build_profiles, FallbackProfiler};
use gatrec::synthetic::{generate, SyntheticConfig};
use gatrec::trainer::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let data = generate(&SyntheticConfig::default());
    let ds = Dataset::new(data.interactions, data.items);
    let (graph, neutral) = Pipeline::graph(&ds)?;

    let dim = 384;
    let profiles = build_profiles(&ds, &FallbackProfiler, &Default::default(), 1);
    let table = build_embedding_table(&ds, &profiles, &HashingEncoder::new(dim), None, &EmbedOptions::default())?;
    let config = TrainConfig {
        batch_size: 128,
        max_epochs: epochs,
        early_stop_patience: epochs,
        ..TrainConfig::default()
    };
    let features = init_features(&config.model, graph.node_index(), InitMode::TextInit, Some(&table), config.seed)?;
    let model = train(&graph, &neutral, &features, &config)?;

    println!("epoch\ttrain\tval\tlr");
    for r in model.meta.history.iter().filter(|r| r.epoch == 1 || r.epoch % 5 == 0) {
        println!("{}\t{:.4}\t{:.4}\t{:e}", r.epoch, r.train_loss, r.val_loss, r.lr);
    }
    println!(
        "{} epochs, best epoch {} (validation loss {:.4}), {} parameters",
        model.meta.epochs_run,
        model.meta.best_epoch,
        model.meta.best_val_loss,
        model.params.num_parameters()
    );

    let path = std::env::temp_dir().join(format!("gatrec-example-{}.ckpt", std::process::id()));
    model.save(&path)?;
    let back = TrainedModel::load(&path)?;
    let drift = ds
        .interactions
        .iter()
        .map(|i| (model.score_pair(i.user_id, i.item_id).unwrap() - back.score_pair(i.user_id, i.item_id).unwrap()).abs())
        .fold(0.0, f64::max);
    let bytes = std::fs::read(&path)?;
    back.save(&path)?;
    println!(
        "reloaded checkpoint: max score change {drift:.1e} (f32 storage), re-saved bytes identical: {}",
        std::fs::read(&path)? == bytes
    );
    std::fs::remove_file(path)?;
    Ok(())
}
