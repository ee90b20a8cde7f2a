//! Feature-hashing embeddings of the synthetic item texts: items sharing a
//! genre end up closer than items that do not.
//!
//! ```text
//! cargo run -p gatrec --example text_embedding [-- DIM]
//! ```

use gatrec::dataset::build_item_text;
use gatrec::embedder::{hash_embed, tokenize};
use gatrec::synthetic::{generate, SyntheticConfig};

fn main() {
    let dim: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(384);
    let data = generate(&SyntheticConfig::default());
    let text = build_item_text(&data.items[&1]);
    println!("{text}");
    println!("tokens: {}", tokenize(&text).collect::<Vec<_>>().join(" "));

    let vecs: Vec<_> = data.items.values().map(|m| hash_embed(&build_item_text(m), dim)).collect();
    let genre: Vec<usize> = data.item_genres.values().map(|g| g[0]).collect();
    let (mut same, mut ns, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            let c = vecs[i].cosine(&vecs[j]);
            if genre[i] == genre[j] {
                same += c;
                ns += 1;
            } else {
                cross += c;
                nc += 1;
            }
        }
    }
    println!(
        "dim {dim}: mean cosine same genre {:.4}, different genre {:.4}",
        same / ns as f64,
        cross / nc as f64
    );
}
