//! Trains on the full synthetic dataset with the bundled run settings and
//! lists each sample user's top unseen items next to the genres that user was
//! generated to love.
//!
//! ```text
//! cargo run --release -p gatrec --example recommend_top_k [-- USER...]
//! ```

use std::path::Path;

use gatrec::config::{Overrides, RunConfig};
use gatrec::pipeline::{recommend, Pipeline, Scope};
use gatrec::synthetic::{generate, genre_names, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut users: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if users.is_empty() {
        users = vec![1, 2, 95];
    }
    let work = std::env::temp_dir().join(format!("gatrec-recommend-{}", std::process::id()));
    let mut cfg = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/run.conf"))?;
    cfg.apply(&Overrides {
        offline: true,
        out_dir: Some(work.join("out")),
        ..Overrides::default()
    });
    cfg.cache_dir = work.join("cache");
    let pipeline = Pipeline::from_config(cfg)?;
    let ds = pipeline.ingest()?;
    let model = pipeline.train(&ds, Scope::Full)?;
    println!("trained {} epochs (best {})", model.meta.epochs_run, model.meta.best_epoch);

    // the fixture is generated from the default config, so the planted tastes match
    let data = generate(&SyntheticConfig::default());
    let names = genre_names();
    for user in users {
        let (loved, _) = data.user_tastes[&user];
        let rated = ds.interactions.iter().filter(|i| i.user_id == user).count();
        println!("user {user} ({rated} ratings) loves {} and {}", names[loved[0]], names[loved[1]]);
        for (rank, (item, score)) in recommend(&model, &ds.interactions, user, 5)?.iter().enumerate() {
            let meta = &ds.items[item];
            println!("  {} {:<28} {:<20} {score:.4}", rank + 1, meta.title, meta.genres.join(","));
        }
    }
    std::fs::remove_dir_all(work)?;
    Ok(())
}
