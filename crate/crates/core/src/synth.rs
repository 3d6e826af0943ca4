//! Deterministic MovieLens-style rating corpus for desk-scale experiments.
//!
//! Items get one to three of the 18 MovieLens genres and a long-tailed
//! popularity; users get a lognormal activity level, a genre affinity and a
//! latent taste vector. Stars come from taste, affinity and item quality plus
//! noise, so the binarized data has both genre and latent structure.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Rating, RawRatings, Scale};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};

pub const GENRES: [&str; 18] = [
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

/// Relative frequency of each genre, loosely following MovieLens 1M.
const GENRE_WEIGHTS: [f64; 18] = [
    5.0, 2.8, 1.1, 2.2, 12.0, 2.1, 1.3, 16.0, 0.7, 0.4, 3.4, 1.1, 1.1, 4.7, 2.8, 4.9, 1.4, 0.7,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub median_activity: f64,
    pub max_activity: usize,
    /// Exponent of the Zipf-like item popularity.
    pub popularity_skew: f64,
    pub taste_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 1500,
            items: 2000,
            median_activity: 90.0,
            max_activity: 800,
            popularity_skew: 0.9,
            taste_dim: 8,
            seed: 42,
        }
    }
}

fn item_id(i: usize) -> String {
    format!("m{:05}", i + 1)
}

fn user_id(u: usize) -> String {
    format!("u{:05}", u + 1)
}

/// Generates star ratings with genre metadata.
pub fn generate(config: &SynthConfig) -> Result<RawRatings> {
    if config.users == 0 || config.items == 0 || config.taste_dim == 0 {
        return Err(Error::InvalidParameter(
            "synthetic corpus needs users, items and taste dims".into(),
        ));
    }
    let mut rng = rng_for(config.seed, Stream::Synthetic);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let genre_pick = WeightedIndex::new(GENRE_WEIGHTS).expect("positive weights");

    let item_genres: Vec<BTreeSet<usize>> = (0..config.items)
        .map(|_| {
            let n = match rng.gen::<f64>() {
                p if p < 0.5 => 1,
                p if p < 0.85 => 2,
                _ => 3,
            };
            let mut g = BTreeSet::new();
            while g.len() < n {
                g.insert(genre_pick.sample(&mut rng));
            }
            g
        })
        .collect();

    let scale = 1.0 / (config.taste_dim as f64).sqrt();
    let item_taste: Vec<Vec<f64>> = (0..config.items)
        .map(|_| {
            (0..config.taste_dim)
                .map(|_| std_normal.sample(&mut rng) * scale)
                .collect()
        })
        .collect();
    let item_quality: Vec<f64> = (0..config.items)
        .map(|_| 0.5 * std_normal.sample(&mut rng))
        .collect();

    // Popularity follows a shuffled Zipf law so item ids carry no rank.
    let mut ranks: Vec<usize> = (0..config.items).collect();
    for i in (1..ranks.len()).rev() {
        ranks.swap(i, rng.gen_range(0..=i));
    }
    let popularity: Vec<f64> = ranks
        .iter()
        .map(|&r| (1.0 + r as f64).powf(-config.popularity_skew))
        .collect();

    let activity = LogNormal::new(config.median_activity.ln(), 0.8)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let affinity_draw = Gamma::new(0.4, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut records = Vec::new();
    for u in 0..config.users {
        let cap = config.max_activity.min(config.items);
        let count = (activity.sample(&mut rng).round() as usize).clamp(20.min(cap), cap);
        let affinity: Vec<f64> = (0..GENRES.len())
            .map(|_| affinity_draw.sample(&mut rng))
            .collect();
        let total: f64 = affinity.iter().sum::<f64>().max(1e-12);
        let affinity: Vec<f64> = affinity.iter().map(|a| a / total).collect();
        let taste: Vec<f64> = (0..config.taste_dim)
            .map(|_| std_normal.sample(&mut rng))
            .collect();

        let weights: Vec<f64> = (0..config.items)
            .map(|i| {
                let genre_fit: f64 = item_genres[i].iter().map(|&g| affinity[g]).sum::<f64>()
                    / item_genres[i].len() as f64;
                popularity[i] * (0.2 + 6.0 * genre_fit)
            })
            .collect();
        let mut chosen = BTreeSet::new();
        let mut pick =
            WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        while chosen.len() < count {
            let i = pick.sample(&mut rng);
            if chosen.insert(i) && chosen.len() < count {
                pick.update_weights(&[(i, &0.0)])
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            }
        }

        for i in chosen {
            let fit: f64 = taste.iter().zip(&item_taste[i]).map(|(a, b)| a * b).sum();
            let genre_fit: f64 = item_genres[i].iter().map(|&g| affinity[g]).sum::<f64>();
            let score = 3.5
                + 0.9 * fit
                + 2.0 * genre_fit
                + item_quality[i]
                + 0.6 * std_normal.sample(&mut rng);
            records.push(Rating {
                user: user_id(u),
                item: item_id(i),
                rating: score.round().clamp(1.0, 5.0),
            });
        }
    }

    let rated: BTreeSet<&str> = records.iter().map(|r| r.item.as_str()).collect();
    let genres: BTreeMap<String, BTreeSet<String>> = (0..config.items)
        .map(item_id)
        .filter(|id| rated.contains(id.as_str()))
        .map(|id| {
            let idx: usize = id[1..].parse::<usize>().expect("generated id") - 1;
            let labels = item_genres[idx]
                .iter()
                .map(|&g| GENRES[g].to_string())
                .collect();
            (id, labels)
        })
        .collect();

    Ok(RawRatings {
        records,
        genres,
        scale: Scale::Stars,
        malformed: 0,
        dropped_without_metadata: 0,
    })
}

/// Writes `ratings.csv` (`user,item,rating`) and `items.csv`
/// (`item,genre1|genre2|...`) into `dir`, returning both paths.
pub fn write_corpus(raw: &RawRatings, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ratings = dir.join("ratings.csv");
    let items = dir.join("items.csv");

    let mut w = BufWriter::new(File::create(&ratings).map_err(|e| Error::io(&ratings, e))?);
    let io = |e| Error::io(&ratings, e);
    writeln!(w, "user,item,rating").map_err(io)?;
    for r in &raw.records {
        writeln!(w, "{},{},{}", r.user, r.item, r.rating).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let mut w = BufWriter::new(File::create(&items).map_err(|e| Error::io(&items, e))?);
    let io = |e| Error::io(&items, e);
    writeln!(w, "item,genres").map_err(io)?;
    for (item, labels) in &raw.genres {
        let joined: Vec<&str> = labels.iter().map(String::as_str).collect();
        writeln!(w, "{item},{}", joined.join("|")).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok((ratings, items))
}
