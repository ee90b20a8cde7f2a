//! Seeded synthetic ratings with planted genre preferences and fabricated
//! item metadata whose text carries the genre structure.
//!
//! Every user loves two genres and dislikes two others; items are drawn
//! uniformly so popularity carries no signal about taste. The last
//! `cold_start_users` users rate only a handful of items.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{write_interactions, write_metadata_file, Format, Interaction, ItemMeta};

struct Genre {
    name: &'static str,
    nouns: [&'static str; 6],
    themes: [&'static str; 6],
}

const GENRES: [Genre; 8] = [
    Genre {
        name: "Western",
        nouns: ["Frontier", "Outlaw", "Canyon", "Ranch", "Sheriff", "Saddle"],
        themes: ["cattle", "gunslinger", "prairie", "bounty", "stagecoach", "desert"],
    },
    Genre {
        name: "Horror",
        nouns: ["Crypt", "Shadow", "Haunting", "Coffin", "Ghoul", "Asylum"],
        themes: ["demon", "curse", "blood", "nightmare", "possession", "graveyard"],
    },
    Genre {
        name: "Romance",
        nouns: ["Heart", "Kiss", "Wedding", "Letters", "Sweetheart", "Promise"],
        themes: ["love", "courtship", "passion", "longing", "engagement", "soulmate"],
    },
    Genre {
        name: "SciFi",
        nouns: ["Starship", "Android", "Nebula", "Orbit", "Cyborg", "Galaxy"],
        themes: ["alien", "robot", "spacecraft", "planet", "laser", "wormhole"],
    },
    Genre {
        name: "Animation",
        nouns: ["Puppy", "Dragon", "Toybox", "Bunny", "Castle", "Balloon"],
        themes: ["cartoon", "talking", "magical", "kingdom", "princess", "adventure"],
    },
    Genre {
        name: "Crime",
        nouns: ["Heist", "Mobster", "Detective", "Alibi", "Syndicate", "Witness"],
        themes: ["robbery", "gangster", "murder", "police", "mafia", "investigation"],
    },
    Genre {
        name: "War",
        nouns: ["Battalion", "Trench", "Platoon", "Siege", "Bunker", "Regiment"],
        themes: ["soldier", "battlefield", "invasion", "combat", "army", "veteran"],
    },
    Genre {
        name: "Musical",
        nouns: ["Melody", "Chorus", "Ballet", "Serenade", "Rhapsody", "Encore"],
        themes: ["singing", "dancing", "broadway", "songs", "orchestra", "stage"],
    },
];

const ADJECTIVES: [&str; 10] = [
    "Last", "Silent", "Golden", "Broken", "Hidden", "Lost", "Wild", "Final", "Crimson", "Eternal",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub users: u64,
    pub items: u64,
    pub cold_start_users: u64,
    /// Ratings per regular user, inclusive range.
    pub ratings_per_user: (usize, usize),
    pub ratings_per_cold_user: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 100,
            items: 200,
            cold_start_users: 10,
            ratings_per_user: (30, 50),
            ratings_per_cold_user: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub interactions: Vec<Interaction>,
    pub items: BTreeMap<u64, ItemMeta>,
    /// Genre indices (into the fixed genre list) per item.
    pub item_genres: BTreeMap<u64, Vec<usize>>,
    /// (loved genres, disliked genres) per user.
    pub user_tastes: BTreeMap<u64, ([usize; 2], [usize; 2])>,
}

pub fn genre_names() -> Vec<&'static str> {
    GENRES.iter().map(|g| g.name).collect()
}

pub fn generate(config: &SyntheticConfig) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut items = BTreeMap::new();
    let mut item_genres = BTreeMap::new();
    for id in 1..=config.items {
        let primary = (id as usize - 1) % GENRES.len();
        let mut gs = vec![primary];
        if rng.random::<f64>() < 0.25 {
            let second = rng.random_range(0..GENRES.len());
            if second != primary {
                gs.push(second);
            }
        }
        let g = &GENRES[primary];
        let title = format!(
            "The {} {} {}",
            ADJECTIVES.choose(&mut rng).unwrap(),
            g.nouns.choose(&mut rng).unwrap(),
            id
        );
        let themes: Vec<&str> = g.themes.choose_multiple(&mut rng, 3).copied().collect();
        let mut overview = format!(
            "A {} tale of {} and {}.",
            themes[0], themes[1], themes[2]
        );
        if let Some(&s) = gs.get(1) {
            overview.push_str(&format!(" With a touch of {}.", GENRES[s].themes.choose(&mut rng).unwrap()));
        }
        let genres = gs.iter().map(|&k| GENRES[k].name.to_string()).collect();
        items.insert(id, ItemMeta::new(id, title, genres, overview));
        item_genres.insert(id, gs);
    }

    let all_items: Vec<u64> = (1..=config.items).collect();
    let mut interactions = Vec::new();
    let mut user_tastes = BTreeMap::new();
    let regular = config.users - config.cold_start_users;
    for user in 1..=config.users {
        let mut order: Vec<usize> = (0..GENRES.len()).collect();
        order.shuffle(&mut rng);
        let loved = [order[0], order[1]];
        let disliked = [order[2], order[3]];
        user_tastes.insert(user, (loved, disliked));
        let n = if user <= regular {
            rng.random_range(config.ratings_per_user.0..=config.ratings_per_user.1)
        } else {
            config.ratings_per_cold_user
        };
        let mut picked: Vec<u64> = all_items.choose_multiple(&mut rng, n).copied().collect();
        picked.sort_unstable();
        for item in picked {
            let gs = &item_genres[&item];
            let likes = gs.iter().any(|g| loved.contains(g));
            let hates = gs.iter().any(|g| disliked.contains(g));
            let noise = rng.random::<f64>();
            let rating = if likes && !hates {
                if noise < 0.55 { 5 } else if noise < 0.9 { 4 } else { 3 }
            } else if hates && !likes {
                if noise < 0.5 { 1 } else if noise < 0.9 { 2 } else { 3 }
            } else if noise < 0.6 {
                3
            } else if noise < 0.8 {
                2
            } else {
                4
            };
            let ts = 880_000_000 + rng.random_range(0..10_000_000i64);
            interactions.push(Interaction::new(user, item, rating, ts));
        }
    }
    SyntheticData {
        interactions,
        items,
        item_genres,
        user_tastes,
    }
}

/// Writes `u.data` (tab-separated ratings), `u.item` (pipe-separated titles)
/// and `metadata.tsv` (offline catalog records) into `dir`.
pub fn write_fixture(data: &SyntheticData, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("u.data"))?);
    write_interactions(&mut w, &data.interactions, Format::Ml100k)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("u.item"))?);
    for meta in data.items.values() {
        writeln!(w, "{}|{}|01-Jan-1995||", meta.item_id, meta.title)?;
    }
    w.flush()?;
    write_metadata_file(&dir.join("metadata.tsv"), &data.items)
}
