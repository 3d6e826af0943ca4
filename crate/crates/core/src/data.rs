//! Rating ingestion and the preprocessing pipeline: binarize, subsample the
//! most active users/items, and split each user's profile into train/test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::{debug, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};

/// Field separator of the ratings and metadata files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    pub fn delimiter(self) -> char {
        match self {
            Format::Csv => ',',
            Format::Tsv => '\t',
        }
    }

    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => Format::Tsv,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Explicit star ratings in [1, 5].
    Stars,
    /// Values already mapped onto {0, 1}.
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rating {
    pub user: String,
    pub item: String,
    pub rating: f64,
}

/// Ratings together with the genre labels of every rated item.
///
/// Every record's item has an entry in `genres`, and every entry carries at
/// least one label.
#[derive(Debug, Clone)]
pub struct RawRatings {
    pub records: Vec<Rating>,
    pub genres: BTreeMap<String, BTreeSet<String>>,
    pub scale: Scale,
    /// Rows that failed to parse or carried an out-of-range rating.
    pub malformed: usize,
    /// Rows whose item is missing from the metadata file.
    pub dropped_without_metadata: usize,
}

impl RawRatings {
    pub fn topic_vocabulary(&self) -> BTreeSet<&str> {
        self.genres
            .values()
            .flat_map(|g| g.iter().map(String::as_str))
            .collect()
    }

    /// Records that count as an interaction: every star rating, or a 1 on the
    /// binary scale.
    fn interactions(&self) -> impl Iterator<Item = &Rating> {
        self.records.iter().filter(|r| r.rating > 0.0)
    }
}

fn split_line(line: &str, delimiter: char) -> Vec<&str> {
    line.split(delimiter).map(str::trim).collect()
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// Reads `item,genre1|genre2|...` rows. A header row is skipped when present.
pub fn load_item_genres(path: &Path, format: Format) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut genres = BTreeMap::new();
    for (lineno, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(line, format.delimiter());
        if lineno == 0 && fields[0].eq_ignore_ascii_case("item") {
            continue;
        }
        let item = fields[0].to_string();
        let labels: BTreeSet<String> = fields
            .get(1)
            .map(|g| {
                g.split('|')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        if labels.is_empty() {
            return Err(Error::ItemWithoutGenre(item));
        }
        genres.insert(item, labels);
    }
    Ok(genres)
}

/// Loads `user,item,rating[,timestamp]` rows and joins them with the item
/// metadata file. The header row is detected by a non-numeric rating field.
pub fn load_ratings(ratings: &Path, metadata: &Path, format: Format) -> Result<RawRatings> {
    let item_genres = load_item_genres(metadata, format)?;
    let mut records = Vec::new();
    let mut malformed = 0;
    let mut dropped = 0;
    let mut missing = BTreeSet::new();

    for (lineno, line) in read_lines(ratings)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(line, format.delimiter());
        if fields.len() < 3 || fields[0].is_empty() || fields[1].is_empty() {
            malformed += 1;
            continue;
        }
        let rating = match fields[2].parse::<f64>() {
            Ok(r) => r,
            Err(_) if lineno == 0 => continue,
            Err(_) => {
                malformed += 1;
                continue;
            }
        };
        if !(1.0..=5.0).contains(&rating) {
            malformed += 1;
            continue;
        }
        if !item_genres.contains_key(fields[1]) {
            dropped += 1;
            missing.insert(fields[1].to_string());
            continue;
        }
        records.push(Rating {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            rating,
        });
    }

    if malformed > 0 {
        warn!("{}: skipped {malformed} malformed rows", ratings.display());
    }
    if !missing.is_empty() {
        warn!(
            "{}: dropped {dropped} rows for {} items absent from metadata",
            ratings.display(),
            missing.len()
        );
    }
    if records.is_empty() {
        return Err(Error::ZeroValidRows(ratings.to_path_buf()));
    }

    let rated: BTreeSet<&str> = records.iter().map(|r| r.item.as_str()).collect();
    let genres = item_genres
        .into_iter()
        .filter(|(item, _)| rated.contains(item.as_str()))
        .collect();

    Ok(RawRatings {
        records,
        genres,
        scale: Scale::Stars,
        malformed,
        dropped_without_metadata: dropped,
    })
}

/// Maps star ratings onto {0, 1}: at or above `threshold` becomes 1.
/// Already-binary input is returned unchanged.
pub fn binarize(raw: &RawRatings, threshold: f64) -> RawRatings {
    let mut out = raw.clone();
    if raw.scale == Scale::Binary {
        return out;
    }
    for r in &mut out.records {
        r.rating = if r.rating >= threshold { 1.0 } else { 0.0 };
    }
    out.scale = Scale::Binary;
    out
}

fn top_n(counts: &HashMap<&str, usize>, n: usize) -> BTreeSet<String> {
    let mut ranked: Vec<(&str, usize)> = counts.iter().map(|(k, v)| (*k, *v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(n)
        .map(|(k, _)| k.to_string())
        .collect()
}

fn interaction_counts<'a>(
    records: &[&'a Rating],
) -> (HashMap<&'a str, usize>, HashMap<&'a str, usize>) {
    let mut users = HashMap::new();
    let mut items = HashMap::new();
    for r in records {
        *users.entry(r.user.as_str()).or_default() += 1;
        *items.entry(r.item.as_str()).or_default() += 1;
    }
    (users, items)
}

/// Core filtering followed by a top-N cut on users, then on items.
///
/// `core == 0` disables the core step; `None` keeps every user or item.
/// Ranking is by interaction count descending, then id ascending.
pub fn subsample(
    raw: &RawRatings,
    core: usize,
    top_users: Option<usize>,
    top_items: Option<usize>,
) -> Result<RawRatings> {
    if top_users == Some(0) || top_items == Some(0) {
        return Err(Error::InvalidParameter(
            "top_users and top_items must be at least 1".into(),
        ));
    }
    let mut kept: Vec<&Rating> = raw.interactions().collect();

    if core > 0 {
        loop {
            let (users, items) = interaction_counts(&kept);
            let before = kept.len();
            kept.retain(|r| users[r.user.as_str()] >= core && items[r.item.as_str()] >= core);
            if kept.len() == before {
                break;
            }
        }
    }

    if let Some(n) = top_users {
        let (users, _) = interaction_counts(&kept);
        let chosen = top_n(&users, n);
        kept.retain(|r| chosen.contains(&r.user));
    }
    if let Some(n) = top_items {
        let (_, items) = interaction_counts(&kept);
        let chosen = top_n(&items, n);
        kept.retain(|r| chosen.contains(&r.item));
    }

    if kept.is_empty() {
        return Err(Error::EmptyResult);
    }

    let records: Vec<Rating> = kept.into_iter().cloned().collect();
    let items: BTreeSet<&str> = records.iter().map(|r| r.item.as_str()).collect();
    let genres = raw
        .genres
        .iter()
        .filter(|(k, _)| items.contains(k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(RawRatings {
        records,
        genres,
        scale: raw.scale,
        malformed: raw.malformed,
        dropped_without_metadata: raw.dropped_without_metadata,
    })
}

/// Sparse binary user × item relevance with genre labels per item.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    users: Vec<String>,
    items: Vec<String>,
    topics: Vec<String>,
    item_topics: Vec<Vec<usize>>,
    /// Sorted, distinct relevant item indices per user.
    rows: Vec<Vec<usize>>,
}

impl InteractionMatrix {
    /// Builds a matrix from already-indexed parts, validating the invariants.
    pub fn from_parts(
        users: Vec<String>,
        items: Vec<String>,
        topics: Vec<String>,
        item_topics: Vec<Vec<usize>>,
        rows: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if item_topics.len() != items.len() {
            return Err(Error::DimensionMismatch {
                expected: items.len(),
                actual: item_topics.len(),
            });
        }
        if rows.len() != users.len() {
            return Err(Error::DimensionMismatch {
                expected: users.len(),
                actual: rows.len(),
            });
        }
        for (i, t) in item_topics.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::ItemWithoutGenre(items[i].clone()));
            }
            if t.iter().any(|&j| j >= topics.len()) {
                return Err(Error::InvalidParameter(format!(
                    "item {} references an unknown topic",
                    items[i]
                )));
            }
        }
        let distinct = |v: &[String]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        if !distinct(&users) || !distinct(&items) || !distinct(&topics) {
            return Err(Error::InvalidParameter("duplicate id in index map".into()));
        }
        let rows = rows
            .into_iter()
            .map(|r| {
                let set: BTreeSet<usize> = r.into_iter().collect();
                if set.iter().any(|&i| i >= items.len()) {
                    return Err(Error::InvalidParameter("item index out of range".into()));
                }
                Ok(set.into_iter().collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            users,
            items,
            topics,
            item_topics,
            rows,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    /// Topic indices of one item.
    pub fn item_topics(&self, item: usize) -> &[usize] {
        &self.item_topics[item]
    }

    /// Relevant items of one user, ascending.
    pub fn user_items(&self, user: usize) -> &[usize] {
        &self.rows[user]
    }

    pub fn is_relevant(&self, user: usize, item: usize) -> bool {
        self.rows[user].binary_search(&item).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// True when users, items and topics index identically.
    pub fn same_index(&self, other: &InteractionMatrix) -> bool {
        self.users == other.users
            && self.items == other.items
            && self.topics == other.topics
            && self.item_topics == other.item_topics
    }
}

/// Train and test matrices over shared index maps.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: InteractionMatrix,
    pub test: InteractionMatrix,
    /// Users left out because one side of their split would be empty.
    pub dropped_users: Vec<String>,
}

/// Randomly partitions each user's interactions; the train side receives
/// `ceil(ratio * profile)` of them.
pub fn split_train_test(raw: &RawRatings, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let mut profiles: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in raw.interactions() {
        profiles.entry(&r.user).or_default().insert(&r.item);
    }

    let mut rng = rng_for(seed, Stream::Split);
    let mut dropped = Vec::new();
    let mut sides: Vec<(&str, Vec<&str>, Vec<&str>)> = Vec::new();
    for (user, items) in &profiles {
        let mut items: Vec<&str> = items.iter().copied().collect();
        items.shuffle(&mut rng);
        let n_train = (ratio * items.len() as f64).ceil() as usize;
        if items.len() < 2 || n_train >= items.len() {
            debug!(
                "dropping user {user}: profile of {} cannot be split",
                items.len()
            );
            dropped.push(user.to_string());
            continue;
        }
        let test = items.split_off(n_train);
        sides.push((user, items, test));
    }
    if sides.is_empty() {
        return Err(Error::EmptyResult);
    }
    if !dropped.is_empty() {
        warn!("dropped {} users with unsplittable profiles", dropped.len());
    }

    let item_ids: BTreeSet<&str> = sides
        .iter()
        .flat_map(|(_, a, b)| a.iter().chain(b.iter()).copied())
        .collect();
    let items: Vec<String> = item_ids.iter().map(|s| s.to_string()).collect();
    let item_index: HashMap<&str, usize> =
        item_ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();

    let topic_ids: BTreeSet<&str> = item_ids
        .iter()
        .flat_map(|i| raw.genres[*i].iter().map(String::as_str))
        .collect();
    let topics: Vec<String> = topic_ids.iter().map(|s| s.to_string()).collect();
    let topic_index: HashMap<&str, usize> =
        topic_ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let item_topics: Vec<Vec<usize>> = item_ids
        .iter()
        .map(|i| {
            raw.genres[*i]
                .iter()
                .map(|g| topic_index[g.as_str()])
                .collect()
        })
        .collect();

    let users: Vec<String> = sides.iter().map(|(u, _, _)| u.to_string()).collect();
    let index = |v: &[&str]| v.iter().map(|i| item_index[i]).collect::<Vec<_>>();
    let train_rows = sides.iter().map(|(_, a, _)| index(a)).collect();
    let test_rows = sides.iter().map(|(_, _, b)| index(b)).collect();

    let train = InteractionMatrix::from_parts(
        users.clone(),
        items.clone(),
        topics.clone(),
        item_topics.clone(),
        train_rows,
    )?;
    let test = InteractionMatrix::from_parts(users, items, topics, item_topics, test_rows)?;
    Ok(Split {
        train,
        test,
        dropped_users: dropped,
    })
}
