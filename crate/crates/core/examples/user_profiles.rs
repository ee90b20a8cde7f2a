//! Selects profile items for one user and shows both the offline profile text
//! and the prompt a remote profiler would receive.
//!
//! ```text
//! cargo run -p gatrec --example user_profiles [-- USER]
//! ```

use gatrec::dataset::Dataset;
use gatrec::profiler::{build_profiles, fallback_profile_text, render_prompt, select_profile_items, FallbackProfiler};
use gatrec::synthetic::{generate, genre_names, SyntheticConfig};

fn main() {
    let user: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let data = generate(&SyntheticConfig::default());
    let names = genre_names();
    let (loved, disliked) = data.user_tastes[&user];
    println!(
        "user {user}: planted loves {} and {}, dislikes {} and {}",
        names[loved[0]], names[loved[1]], names[disliked[0]], names[disliked[1]]
    );

    let ds = Dataset::new(data.interactions, data.items);
    let seed = select_profile_items(user, &ds.interactions, &ds.items);
    println!("\n{}", fallback_profile_text(&seed));
    println!("\n--- prompt ---\n{}", render_prompt(&seed));

    let all = build_profiles(&ds, &FallbackProfiler, &Default::default(), 1);
    let empty = all.values().filter(|p| p.text == gatrec::profiler::EMPTY_PROFILE_TEXT).count();
    println!("--- {} profiles built, {empty} without any loved or disliked item", all.len());
}
