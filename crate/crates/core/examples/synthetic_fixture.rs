//! Regenerates the bundled synthetic fixture.
//!
//! ```text
//! cargo run -p gatrec --example synthetic_fixture [-- OUT_DIR]
//! ```

use std::path::PathBuf;

use gatrec::synthetic::{generate, write_fixture, SyntheticConfig};

fn main() -> std::io::Result<()> {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic"));
    let data = generate(&SyntheticConfig::default());
    write_fixture(&data, &dir)?;
    println!(
        "wrote {} ratings over {} items to {}",
        data.interactions.len(),
        data.items.len(),
        dir.display()
    );
    Ok(())
}
