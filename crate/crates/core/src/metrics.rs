//! Exposure accounting and evaluation metrics.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Position-bias weight `1/log2(1+k)` for a 1-based position.
pub fn position_weight(k: usize) -> f64 {
    debug_assert!(k >= 1, "positions start at 1");
    1.0 / (1.0 + k as f64).log2()
}

/// Cumulative exposure per item over all ingested rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureLedger {
    /// Appearances.
    pub exposure: Vec<u64>,
    /// Position-weighted appearances.
    pub positional: Vec<f64>,
    /// Position-weighted appearances at examined positions only.
    pub examined: Vec<f64>,
    /// Clicks received per item.
    pub item_clicks: Vec<u64>,
    pub clicks: u64,
    pub rounds: u64,
}

impl ExposureLedger {
    pub fn new(n_items: usize) -> Self {
        Self {
            exposure: vec![0; n_items],
            positional: vec![0.0; n_items],
            examined: vec![0.0; n_items],
            item_clicks: vec![0; n_items],
            clicks: 0,
            rounds: 0,
        }
    }

    pub fn n_items(&self) -> usize {
        self.exposure.len()
    }

    /// Adds one round: `items` in rank order and the 1-based click position.
    pub fn ingest(&mut self, items: &[usize], click: Option<usize>) {
        let examined = click.unwrap_or(items.len()).min(items.len());
        for (pos, &item) in items.iter().enumerate() {
            let k = pos + 1;
            let w = position_weight(k);
            self.exposure[item] += 1;
            self.positional[item] += w;
            if k <= examined {
                self.examined[item] += w;
            }
        }
        if let Some(c) = click {
            self.clicks += 1;
            self.item_clicks[items[c - 1]] += 1;
        }
        self.rounds += 1;
    }

    /// Gini index of normalized position-weighted exposure.
    pub fn equality_of_opportunity(&self) -> Result<f64> {
        gini(&normalize(&self.positional)?)
    }

    /// Gini index of normalized examined exposure.
    pub fn equality_of_impact(&self) -> Result<f64> {
        gini(&normalize(&self.examined)?)
    }

    /// Fraction of items recommended at least once.
    pub fn item_coverage(&self) -> f64 {
        item_coverage(&self.exposure)
    }

    /// Per-item share of recommendations that drew no click.
    pub fn false_positive_rates(&self) -> Vec<Option<f64>> {
        false_positive_rate(&self.exposure, &self.item_clicks)
    }
}

/// Divides every entry by the total.
pub fn normalize(values: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter(
            "cannot normalize an all-zero exposure vector".into(),
        ));
    }
    Ok(values.iter().map(|v| v / total).collect())
}

/// Gini index of a distribution: entries sorted non-descending, then
/// `Σ_k (2k - n - 1) x_k / (n - 1)`.
pub fn gini(distribution: &[f64]) -> Result<f64> {
    let n = distribution.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "Gini index needs at least two items".into(),
        ));
    }
    if distribution.iter().any(|v| *v < 0.0 || v.is_nan()) {
        return Err(Error::InvalidParameter(
            "Gini index needs non-negative entries".into(),
        ));
    }
    let mut sorted = distribution.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - nf - 1.0) * x)
        .sum();
    Ok(sum / (nf - 1.0))
}

pub fn item_coverage(exposure: &[u64]) -> f64 {
    if exposure.is_empty() {
        return 0.0;
    }
    exposure.iter().filter(|e| **e > 0).count() as f64 / exposure.len() as f64
}

/// `(E_i - clicked_i) / E_i`, or `None` for never-recommended items.
pub fn false_positive_rate(recommended: &[u64], clicked: &[u64]) -> Vec<Option<f64>> {
    recommended
        .iter()
        .zip(clicked)
        .map(|(&e, &c)| (e > 0).then(|| e.saturating_sub(c) as f64 / e as f64))
        .collect()
}

/// McNemar's test on paired binary outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemar {
    /// Pairs where only the second outcome is true.
    pub n01: u64,
    /// Pairs where only the first outcome is true.
    pub n10: u64,
    pub statistic: f64,
    pub p_value: f64,
    /// No discordant pairs; the p-value is reported as 1.
    pub degenerate: bool,
}

/// Continuity-corrected statistic `(|n01 - n10| - 1)² / (n01 + n10)` with
/// the chi-square(1) tail `erfc(sqrt(stat / 2))`.
pub fn mcnemar(pairs: impl IntoIterator<Item = (bool, bool)>) -> McNemar {
    let (mut n01, mut n10) = (0u64, 0u64);
    for (a, b) in pairs {
        match (a, b) {
            (false, true) => n01 += 1,
            (true, false) => n10 += 1,
            _ => {}
        }
    }
    let discordant = n01 + n10;
    if discordant == 0 {
        return McNemar {
            n01,
            n10,
            statistic: 0.0,
            p_value: 1.0,
            degenerate: true,
        };
    }
    let diff = (n01 as f64 - n10 as f64).abs() - 1.0;
    let statistic = diff * diff / discordant as f64;
    McNemar {
        n01,
        n10,
        statistic,
        p_value: erfc((statistic / 2.0).sqrt()),
        degenerate: false,
    }
}
