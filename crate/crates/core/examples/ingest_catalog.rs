//! Parses the bundled ratings and titles, resolves metadata from the offline
//! catalog and prints a few unified item texts.
//!
//! ```text
//! cargo run -p gatrec --example ingest_catalog
//! ```

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use gatrec::dataset::{
    build_item_text, enrich_items, parse_interactions, parse_item_titles, CatalogClient, Dataset, Format,
    MetadataCache, OfflineCatalog,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let ratings = parse_interactions(BufReader::new(File::open(dir.join("u.data"))?), Format::Ml100k)?;
    let titles = parse_item_titles(BufReader::new(File::open(dir.join("u.item"))?), Format::Ml100k)?;
    let catalog = OfflineCatalog::from_file(&dir.join("metadata.tsv"))?;
    let cache = MetadataCache::in_memory();
    let items = enrich_items(&titles, Some(&catalog as &dyn CatalogClient), &cache, true, 4)?;
    let ds = Dataset::new(ratings, items);

    println!(
        "{} ratings, {} users, {} items, {} cached records",
        ds.interactions.len(),
        ds.user_ids.len(),
        ds.item_ids.len(),
        cache.len()
    );
    let mut hist = [0usize; 5];
    for it in &ds.interactions {
        hist[it.rating as usize - 1] += 1;
    }
    println!("rating histogram 1..5: {hist:?}");
    for meta in ds.items.values().take(3) {
        println!("{}\t{}", meta.item_id, build_item_text(meta));
    }
    Ok(())
}
