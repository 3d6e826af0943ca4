//! Experiment orchestration: preprocessing, the grid of simulation cells,
//! CSV emission and paired significance reports.
//!
//! Output layout under the experiment's output directory:
//!
//! ```text
//! summary.csv                 algorithm,reward,c,seed,clicks,EO,EI,IC
//! best.csv                    best c per (algorithm, reward) by mean clicks
//! failures.csv                only when some cell failed
//! <algo>_<reward>_c<c>_s<seed>/
//!     metrics.csv             round,clicks_cum,EO,EI,IC
//!     rounds.csv              round,user,click,regret,items
//!     items.csv               item,E,PE,PEE,clicks,fpr
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{binarize, load_ratings, split_train_test, subsample, Format, RawRatings};
use crate::error::{Error, Result};
use crate::metrics::{mcnemar, ExposureLedger, McNemar};
use crate::simulate::{Algorithm, RewardKind, RoundLog, SimConfig, Simulator, World};
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    /// Ratings file, `user,item,rating[,timestamp]`.
    pub ratings: Option<PathBuf>,
    /// Item metadata file, `item,genre1|genre2|...`.
    pub items: Option<PathBuf>,
    pub format: Option<Format>,
    /// Generate a corpus instead of reading one.
    pub synthetic: Option<SynthConfig>,
    pub threshold: f64,
    pub core: usize,
    pub top_users: Option<usize>,
    pub top_items: Option<usize>,
    pub split_ratio: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            ratings: None,
            items: None,
            format: None,
            synthetic: None,
            threshold: 4.0,
            core: 0,
            top_users: Some(1000),
            top_items: None,
            split_ratio: 0.5,
        }
    }
}

impl DataSpec {
    /// MovieLens sampling: the 1K most active users.
    pub fn movielens() -> Self {
        Self::default()
    }

    /// Amazon Book sampling: core-100, then 1K users and 2K items.
    pub fn amazon() -> Self {
        Self {
            core: 100,
            top_users: Some(1000),
            top_items: Some(2000),
            ..Self::default()
        }
    }

    /// Points the spec at `ratings.csv`/`items.csv` inside `dir`, or at the
    /// synthetic generator when `dataset` is `synthetic`.
    pub fn set_dataset(&mut self, dataset: &str) {
        if dataset == "synthetic" {
            self.synthetic.get_or_insert_with(SynthConfig::default);
            self.ratings = None;
            self.items = None;
            return;
        }
        let path = PathBuf::from(dataset);
        if path.is_dir() {
            let pick = |stem: &str| {
                ["csv", "tsv"]
                    .iter()
                    .map(|ext| path.join(format!("{stem}.{ext}")))
                    .find(|p| p.exists())
                    .unwrap_or_else(|| path.join(format!("{stem}.csv")))
            };
            self.ratings = Some(pick("ratings"));
            self.items = Some(pick("items"));
        } else {
            self.items = path.parent().map(|p| p.join("items.csv"));
            self.ratings = Some(path);
        }
        self.synthetic = None;
    }

    /// Loads, binarizes and subsamples.
    pub fn load(&self) -> Result<RawRatings> {
        let raw = match (&self.ratings, &self.synthetic) {
            (Some(ratings), _) => {
                let items = self.items.as_ref().ok_or_else(|| {
                    Error::Config("data.items is required with data.ratings".into())
                })?;
                let format = self.format.unwrap_or_else(|| Format::from_path(ratings));
                load_ratings(ratings, items, format)?
            }
            (None, Some(cfg)) => generate(cfg)?,
            (None, None) => {
                return Err(Error::Config(
                    "no dataset: set data.ratings/data.items or data.synthetic".into(),
                ))
            }
        };
        let binary = binarize(&raw, self.threshold);
        subsample(&binary, self.core, self.top_users, self.top_items)
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold > 1.0 && self.threshold <= 5.0) {
            return Err(Error::Config(format!(
                "threshold {} outside (1, 5]",
                self.threshold
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split ratio {} outside (0, 1)",
                self.split_ratio
            )));
        }
        if self.top_users == Some(0) || self.top_items == Some(0) {
            return Err(Error::Config(
                "top_users/top_items must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub rounds: usize,
    pub list_size: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub d_latent: usize,
    pub shared_model: bool,
    /// Per-round metrics are written every this many rounds and at the end.
    pub emit_every: usize,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            rounds: 50_000,
            list_size: 20,
            gamma: 5e-5,
            lambda: 1.0,
            d_latent: 10,
            shared_model: false,
            emit_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub algorithms: Vec<Algorithm>,
    pub rewards: Vec<RewardKind>,
    pub c: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Lsb, Algorithm::LinUcb, Algorithm::Hybrid],
            rewards: vec![RewardKind::Standard, RewardKind::ExposureAware],
            c: vec![0.01, 0.25, 0.5, 1.0],
            seeds: vec![1],
        }
    }
}

/// A full experiment: dataset, simulation settings, grid and output path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub data: DataSpec,
    pub sim: SimSpec,
    pub grid: GridSpec,
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            data: DataSpec::default(),
            sim: SimSpec::default(),
            grid: GridSpec::default(),
            out: PathBuf::from("results"),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Scales rounds and list size down to laptop-speed runs.
    pub fn desk(mut self) -> Self {
        self.sim.rounds = 10_000;
        self.sim.list_size = 10;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        let g = &self.grid;
        if g.algorithms.is_empty() || g.rewards.is_empty() || g.c.is_empty() || g.seeds.is_empty() {
            return Err(Error::Config(
                "grid axes and seeds must be non-empty".into(),
            ));
        }
        if g.c.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Config(
                "exploration values must be non-negative".into(),
            ));
        }
        if self.sim.emit_every == 0 {
            return Err(Error::Config("emit_every must be at least 1".into()));
        }
        let probe = self.cell_config(&self.cells()[0]);
        probe.validate(usize::MAX)?;
        Ok(())
    }

    /// Grid cells in declaration order: algorithm, then reward, then c,
    /// then seed.
    pub fn cells(&self) -> Vec<CellKey> {
        let g = &self.grid;
        let mut cells = Vec::new();
        for &algorithm in &g.algorithms {
            for &reward in &g.rewards {
                for &c in &g.c {
                    for &seed in &g.seeds {
                        cells.push(CellKey {
                            algorithm,
                            reward,
                            c,
                            seed,
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn cell_config(&self, key: &CellKey) -> SimConfig {
        SimConfig {
            rounds: self.sim.rounds,
            list_size: self.sim.list_size,
            exploration: key.c,
            gamma: self.sim.gamma,
            lambda: self.sim.lambda,
            seed: key.seed,
            algorithm: key.algorithm,
            reward: key.reward,
            shared_model: self.sim.shared_model,
            d_latent: self.sim.d_latent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub algorithm: Algorithm,
    pub reward: RewardKind,
    pub c: f64,
    pub seed: u64,
}

impl CellKey {
    pub fn dir_name(&self) -> String {
        format!(
            "{}_{}_c{}_s{}",
            self.algorithm.label(),
            self.reward.label(),
            self.c,
            self.seed
        )
    }
}

/// Metrics at one emission round, computed over rounds `1..=round`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub round: usize,
    pub clicks: u64,
    pub eo: f64,
    pub ei: f64,
    pub ic: f64,
}

/// Everything one simulation cell produces.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub logs: Vec<RoundLog>,
    pub ledger: ExposureLedger,
    pub curve: Vec<CurvePoint>,
}

impl CellOutput {
    pub fn summary(&self) -> Result<CurvePoint> {
        Ok(CurvePoint {
            round: self.ledger.rounds as usize,
            clicks: self.ledger.clicks,
            eo: self.ledger.equality_of_opportunity()?,
            ei: self.ledger.equality_of_impact()?,
            ic: self.ledger.item_coverage(),
        })
    }
}

/// Runs one simulation and accumulates its exposure ledger, emitting a
/// curve point every `emit_every` rounds and after the last round.
pub fn run_cell(world: &World, config: &SimConfig, emit_every: usize) -> Result<CellOutput> {
    let space = world.train_space(config.algorithm)?;
    let sim = Simulator::new(config.clone(), space, &world.env)?;
    let mut ledger = ExposureLedger::new(world.n_items);
    let mut logs = Vec::with_capacity(config.rounds);
    let mut curve = Vec::new();
    for log in sim {
        let log = log?;
        ledger.ingest(&log.items, log.click);
        if log.round % emit_every == 0 || log.round == config.rounds {
            curve.push(CurvePoint {
                round: log.round,
                clicks: ledger.clicks,
                eo: ledger.equality_of_opportunity()?,
                ei: ledger.equality_of_impact()?,
                ic: ledger.item_coverage(),
            });
        }
        logs.push(log);
    }
    Ok(CellOutput {
        logs,
        ledger,
        curve,
    })
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: std::result::Result<CurvePoint, String>,
}

/// Best `c` per (algorithm, reward) by mean clicks over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BestRow {
    pub algorithm: Algorithm,
    pub reward: RewardKind,
    pub c: f64,
    pub seeds: usize,
    pub clicks: f64,
    pub eo: f64,
    pub ei: f64,
    pub ic: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub best: Vec<BestRow>,
    pub out: PathBuf,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(Error::from)
}

fn write_cell(dir: &Path, output: &CellOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("metrics.csv"))?;
    w.write_record(["round", "clicks_cum", "EO", "EI", "IC"])?;
    for p in &output.curve {
        w.write_record([
            p.round.to_string(),
            p.clicks.to_string(),
            p.eo.to_string(),
            p.ei.to_string(),
            p.ic.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("rounds.csv"))?;
    w.write_record(["round", "user", "click", "regret", "items"])?;
    for log in &output.logs {
        let items: Vec<String> = log.items.iter().map(usize::to_string).collect();
        w.write_record([
            log.round.to_string(),
            log.user.to_string(),
            log.click.map(|c| c.to_string()).unwrap_or_default(),
            log.regret.to_string(),
            items.join(" "),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let l = &output.ledger;
    let fpr = l.false_positive_rates();
    let mut w = csv_writer(&dir.join("items.csv"))?;
    w.write_record(["item", "E", "PE", "PEE", "clicks", "fpr"])?;
    for (i, rate) in fpr.iter().enumerate() {
        w.write_record([
            i.to_string(),
            l.exposure[i].to_string(),
            l.positional[i].to_string(),
            l.examined[i].to_string(),
            l.item_clicks[i].to_string(),
            rate.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn best_rows(spec: &ExperimentSpec, cells: &[CellResult]) -> Vec<BestRow> {
    let mut rows = Vec::new();
    for &algorithm in &spec.grid.algorithms {
        for &reward in &spec.grid.rewards {
            let mut best: Option<BestRow> = None;
            for &c in &spec.grid.c {
                let points: Vec<&CurvePoint> = cells
                    .iter()
                    .filter(|r| {
                        r.key.algorithm == algorithm && r.key.reward == reward && r.key.c == c
                    })
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .collect();
                if points.is_empty() {
                    continue;
                }
                let n = points.len() as f64;
                let mean = |f: fn(&CurvePoint) -> f64| points.iter().map(|p| f(p)).sum::<f64>() / n;
                let row = BestRow {
                    algorithm,
                    reward,
                    c,
                    seeds: points.len(),
                    clicks: mean(|p| p.clicks as f64),
                    eo: mean(|p| p.eo),
                    ei: mean(|p| p.ei),
                    ic: mean(|p| p.ic),
                };
                if best.as_ref().is_none_or(|b| row.clicks > b.clicks) {
                    best = Some(row);
                }
            }
            rows.extend(best);
        }
    }
    rows
}

/// Prepares data once, builds one world per seed, runs every grid cell in
/// a worker pool and writes all CSVs. A failing cell is recorded in
/// `failures.csv` without stopping the others.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;
    let raw = spec.data.load()?;
    info!(
        "loaded {} interactions over {} items",
        raw.records.len(),
        raw.genres.len()
    );

    let worlds: Vec<(u64, std::result::Result<World, String>)> = spec
        .grid
        .seeds
        .par_iter()
        .map(|&seed| {
            let world = split_train_test(&raw, spec.data.split_ratio, seed)
                .and_then(|split| World::build(&split, spec.sim.d_latent, spec.sim.lambda, seed))
                .map_err(|e| e.to_string());
            (seed, world)
        })
        .collect();

    let cells: Vec<CellResult> = spec
        .cells()
        .into_par_iter()
        .map(|key| {
            let world = &worlds
                .iter()
                .find(|(s, _)| *s == key.seed)
                .expect("world per seed")
                .1;
            let outcome = world.as_ref().map_err(Clone::clone).and_then(|world| {
                let output = run_cell(world, &spec.cell_config(&key), spec.sim.emit_every)
                    .map_err(|e| e.to_string())?;
                write_cell(&spec.out.join(key.dir_name()), &output).map_err(|e| e.to_string())?;
                output.summary().map_err(|e| e.to_string())
            });
            if let Err(e) = &outcome {
                warn!("cell {} failed: {e}", key.dir_name());
            }
            CellResult { key, outcome }
        })
        .collect();

    let mut w = csv_writer(&spec.out.join("summary.csv"))?;
    w.write_record([
        "algorithm",
        "reward",
        "c",
        "seed",
        "clicks",
        "EO",
        "EI",
        "IC",
    ])?;
    for cell in &cells {
        if let Ok(p) = &cell.outcome {
            w.write_record([
                cell.key.algorithm.label().to_string(),
                cell.key.reward.label().to_string(),
                cell.key.c.to_string(),
                cell.key.seed.to_string(),
                p.clicks.to_string(),
                p.eo.to_string(),
                p.ei.to_string(),
                p.ic.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&spec.out, e))?;

    let best = best_rows(spec, &cells);
    let mut w = csv_writer(&spec.out.join("best.csv"))?;
    w.write_record([
        "algorithm",
        "reward",
        "c",
        "seeds",
        "clicks",
        "EO",
        "EI",
        "IC",
    ])?;
    for b in &best {
        w.write_record([
            b.algorithm.label().to_string(),
            b.reward.label().to_string(),
            b.c.to_string(),
            b.seeds.to_string(),
            b.clicks.to_string(),
            b.eo.to_string(),
            b.ei.to_string(),
            b.ic.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&spec.out, e))?;

    let failures_path = spec.out.join("failures.csv");
    if cells.iter().any(|c| c.outcome.is_err()) {
        let mut w = csv_writer(&failures_path)?;
        w.write_record(["cell", "error"])?;
        for cell in &cells {
            if let Err(e) = &cell.outcome {
                w.write_record([cell.key.dir_name(), e.clone()])?;
            }
        }
        w.flush().map_err(|e| Error::io(&spec.out, e))?;
    } else if failures_path.exists() {
        fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
    }

    Ok(ExperimentReport {
        cells,
        best,
        out: spec.out.clone(),
    })
}

/// One round of a cell's `rounds.csv`, as needed for pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRound {
    pub round: usize,
    pub user: usize,
    pub clicked: bool,
    pub items: Vec<usize>,
}

pub fn read_rounds(path: &Path) -> Result<Vec<LoggedRound>> {
    let mut reader = csv::Reader::from_path(path)?;
    let bad = |what: &str| Error::ScheduleMismatch(format!("{}: bad {what}", path.display()));
    let mut rounds = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        rounds.push(LoggedRound {
            round: field(0).parse().map_err(|_| bad("round"))?,
            user: field(1).parse().map_err(|_| bad("user"))?,
            clicked: !field(2).is_empty(),
            items: field(4)
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("item")))
                .collect::<Result<_>>()?,
        });
    }
    Ok(rounds)
}

/// A paired McNemar test on one binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTest {
    pub metric: &'static str,
    pub test: McNemar,
    pub significant: bool,
}

/// Significance threshold for flagging paired differences.
pub const SIGNIFICANCE: f64 = 0.1;

/// Pairs two runs that share a user schedule. Clicks are paired per round;
/// item coverage is paired per item (recommended at least once or not).
pub fn compare_rounds(
    a: &[LoggedRound],
    b: &[LoggedRound],
    n_items: usize,
) -> Result<Vec<PairedTest>> {
    if a.len() != b.len() {
        return Err(Error::ScheduleMismatch(format!(
            "runs have {} and {} rounds",
            a.len(),
            b.len()
        )));
    }
    if let Some((x, _)) = a
        .iter()
        .zip(b)
        .find(|(x, y)| x.round != y.round || x.user != y.user)
    {
        return Err(Error::ScheduleMismatch(format!(
            "user schedules diverge at round {}",
            x.round
        )));
    }
    let covered = |rounds: &[LoggedRound]| {
        let mut seen = vec![false; n_items];
        for r in rounds {
            for &i in &r.items {
                if i < n_items {
                    seen[i] = true;
                }
            }
        }
        seen
    };
    let tests = [
        (
            "clicks",
            mcnemar(a.iter().zip(b).map(|(x, y)| (x.clicked, y.clicked))),
        ),
        ("IC", mcnemar(covered(a).into_iter().zip(covered(b)))),
    ];
    Ok(tests
        .into_iter()
        .map(|(metric, test)| PairedTest {
            metric,
            significant: !test.degenerate && test.p_value < SIGNIFICANCE,
            test,
        })
        .collect())
}

fn count_items(dir: &Path) -> Result<usize> {
    let path = dir.join("items.csv");
    let mut reader = csv::Reader::from_path(&path)?;
    Ok(reader.records().count())
}

/// Compares two cell directories written by [`run_experiment`].
pub fn compare_runs(a: &Path, b: &Path) -> Result<Vec<PairedTest>> {
    let n_items = count_items(a)?;
    if n_items != count_items(b)? {
        return Err(Error::ScheduleMismatch(
            "runs cover different item sets".into(),
        ));
    }
    compare_rounds(
        &read_rounds(&a.join("rounds.csv"))?,
        &read_rounds(&b.join("rounds.csv"))?,
        n_items,
    )
}

/// Writes a comparison report as CSV.
pub fn write_comparison(path: &Path, tests: &[PairedTest]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "metric",
        "n01",
        "n10",
        "statistic",
        "p",
        "significant",
        "degenerate",
    ])?;
    for t in tests {
        w.write_record([
            t.metric.to_string(),
            t.test.n01.to_string(),
            t.test.n10.to_string(),
            t.test.statistic.to_string(),
            t.test.p_value.to_string(),
            t.significant.to_string(),
            t.test.degenerate.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
