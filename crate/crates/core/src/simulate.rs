//! The interaction loop: draw a user, recommend, simulate a cascade click
//! from the ground truth, update the model.

use std::sync::OnceLock;

use log::debug;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{select_list, BanditModel, RankedList};
use crate::data::Split;
use crate::error::{Error, Result};
use crate::features::{
    derive_user_truth, topic_base_features, truncated_svd, FeatureKind, FeatureSpace, TopicRows,
};
use crate::reward::{Feedback, RewardModel};
use crate::rng::{rng_for, Stream};

/// Subspace-iteration passes used when factorizing interaction data.
pub const SVD_POWER_ITERATIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Topic-coverage gains (CascadeLSB).
    Lsb,
    /// SVD latent factors (CascadeLinUCB).
    LinUcb,
    /// Latent factors concatenated with topic gains (CascadeHybrid).
    Hybrid,
}

impl Algorithm {
    pub fn feature_kind(self) -> FeatureKind {
        match self {
            Algorithm::Lsb => FeatureKind::Topic,
            Algorithm::LinUcb => FeatureKind::Latent,
            Algorithm::Hybrid => FeatureKind::Hybrid,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Lsb => "lsb",
            Algorithm::LinUcb => "linucb",
            Algorithm::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lsb" => Ok(Algorithm::Lsb),
            "linucb" => Ok(Algorithm::LinUcb),
            "hybrid" => Ok(Algorithm::Hybrid),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardKind {
    #[serde(rename = "standard")]
    Standard,
    #[serde(rename = "ea")]
    ExposureAware,
}

impl RewardKind {
    pub fn label(self) -> &'static str {
        match self {
            RewardKind::Standard => "standard",
            RewardKind::ExposureAware => "ea",
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(RewardKind::Standard),
            "ea" | "exposure_aware" | "exposure-aware" => Ok(RewardKind::ExposureAware),
            other => Err(Error::Config(format!("unknown reward model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rounds: usize,
    pub list_size: usize,
    pub exploration: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub reward: RewardKind,
    pub shared_model: bool,
    pub d_latent: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rounds: 50_000,
            list_size: 20,
            exploration: 0.01,
            gamma: 5e-5,
            lambda: 1.0,
            seed: 0,
            algorithm: Algorithm::LinUcb,
            reward: RewardKind::Standard,
            shared_model: false,
            d_latent: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, n_items: usize) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.list_size == 0 || self.list_size > n_items {
            return Err(Error::Config(format!(
                "list size {} outside 1..={n_items}",
                self.list_size
            )));
        }
        if !(self.exploration >= 0.0) {
            return Err(Error::Config("exploration c must be non-negative".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        Ok(())
    }

    pub fn reward_model(&self) -> RewardModel {
        match self.reward {
            RewardKind::Standard => RewardModel::Standard,
            RewardKind::ExposureAware => RewardModel::ExposureAware { gamma: self.gamma },
        }
    }
}

/// One simulated round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    /// 1-based round index.
    pub round: usize,
    pub user: usize,
    pub items: Vec<usize>,
    /// 1-based click position.
    pub click: Option<usize>,
    /// Click probability of the optimal list minus that of the shown list.
    pub regret: f64,
}

impl RoundLog {
    pub fn examined_count(&self) -> usize {
        self.click.unwrap_or(self.items.len())
    }
}

/// Attraction probabilities of a list, position by position, under the
/// prefix-dependent features of `space`. Clipped to [0, 1].
pub fn attraction_probabilities(
    items: &[usize],
    theta_star: &[f64],
    space: &FeatureSpace,
) -> Vec<f64> {
    space
        .list_features(items)
        .iter()
        .map(|x| {
            let p: f64 = x.iter().zip(theta_star).map(|(a, b)| a * b).sum();
            p.clamp(0.0, 1.0)
        })
        .collect()
}

/// Probability that a cascade scan of the list ends in a click.
pub fn click_probability(probs: &[f64]) -> f64 {
    1.0 - probs.iter().map(|p| 1.0 - p).product::<f64>()
}

/// Scans the list top-down and returns the first position whose Bernoulli
/// draw succeeds.
pub fn simulate_click<R: Rng + ?Sized>(
    items: &[usize],
    theta_star: &[f64],
    space: &FeatureSpace,
    rng: &mut R,
) -> Option<usize> {
    attraction_probabilities(items, theta_star, space)
        .iter()
        .position(|&p| rng.gen::<f64>() < p)
        .map(|i| i + 1)
}

/// Greedy list under the true preferences with no exploration bonus.
pub fn optimal_list(space: &FeatureSpace, theta_star: &[f64], k: usize) -> Result<RankedList> {
    let model = BanditModel::point_estimate(theta_star)?;
    select_list(&model, space, k, &[])
}

/// Ground truth for the simulated users: hybrid test features, per-user
/// preference vectors and a cache of optimal lists.
#[derive(Debug)]
pub struct Environment {
    space: FeatureSpace,
    truth: Vec<Vec<f64>>,
    optimal: Vec<OnceLock<(Vec<usize>, f64)>>,
}

impl Environment {
    pub fn new(space: FeatureSpace, truth: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = truth.iter().find(|t| t.len() != space.dim()) {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                actual: bad.len(),
            });
        }
        let optimal = (0..truth.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            space,
            truth,
            optimal,
        })
    }

    pub fn n_users(&self) -> usize {
        self.truth.len()
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn theta_star(&self, user: usize) -> Result<&[f64]> {
        self.truth
            .get(user)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownUser(user))
    }

    pub fn simulate_click<R: Rng + ?Sized>(
        &self,
        user: usize,
        items: &[usize],
        rng: &mut R,
    ) -> Result<Option<usize>> {
        Ok(simulate_click(
            items,
            self.theta_star(user)?,
            &self.space,
            rng,
        ))
    }

    /// Cached optimal list of length `k` and its click probability.
    pub fn optimal(&self, user: usize, k: usize) -> Result<&(Vec<usize>, f64)> {
        let theta = self.theta_star(user)?;
        let slot = &self.optimal[user];
        if let Some(hit) = slot.get() {
            if hit.0.len() == k {
                return Ok(hit);
            }
            return Err(Error::InvalidParameter(format!(
                "optimal list cached for K={}, requested K={k}",
                hit.0.len()
            )));
        }
        let list = optimal_list(&self.space, theta, k)?;
        let p = click_probability(&attraction_probabilities(&list.items, theta, &self.space));
        Ok(slot.get_or_init(|| (list.items, p)))
    }
}

/// Everything derived from one train/test split: the training feature
/// spaces for each algorithm and the simulated environment.
#[derive(Debug)]
pub struct World {
    pub latent: FeatureSpace,
    pub topic: TopicRows,
    pub env: Environment,
    pub n_items: usize,
}

impl World {
    /// Factorizes train and test separately; ground-truth preferences are
    /// ridge fits on the hybrid test features.
    pub fn build(split: &Split, d_latent: usize, ridge: f64, seed: u64) -> Result<Self> {
        let train_svd = truncated_svd(&split.train, d_latent, SVD_POWER_ITERATIONS, seed)?;
        let test_svd = truncated_svd(
            &split.test,
            d_latent,
            SVD_POWER_ITERATIONS,
            seed.wrapping_add(1),
        )?;
        let topic = topic_base_features(&split.train)?;
        let test_space = FeatureSpace::hybrid(test_svd.item_factors, topic.clone())?;
        let truth = derive_user_truth(&split.test, &test_space, ridge)?;
        debug!(
            "world: {} users, {} items, {} topics",
            split.train.n_users(),
            split.train.n_items(),
            split.train.n_topics()
        );
        Ok(Self {
            latent: FeatureSpace::latent(train_svd.item_factors),
            topic,
            env: Environment::new(test_space, truth)?,
            n_items: split.train.n_items(),
        })
    }

    pub fn train_space(&self, algorithm: Algorithm) -> Result<FeatureSpace> {
        Ok(match algorithm {
            Algorithm::LinUcb => self.latent.clone(),
            Algorithm::Lsb => FeatureSpace::topic(self.topic.clone()),
            Algorithm::Hybrid => FeatureSpace::hybrid(
                self.latent.latent_rows().expect("latent space").clone(),
                self.topic.clone(),
            )?,
        })
    }
}

/// Round-by-round simulation; yields one [`RoundLog`] per round.
pub struct Simulator<'a> {
    config: SimConfig,
    space: FeatureSpace,
    env: &'a Environment,
    models: Vec<BanditModel>,
    reward: RewardModel,
    users: ChaCha8Rng,
    clicks: ChaCha8Rng,
    round: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(config: SimConfig, space: FeatureSpace, env: &'a Environment) -> Result<Self> {
        config.validate(space.n_items())?;
        if space.n_items() != env.space().n_items() {
            return Err(Error::DimensionMismatch {
                expected: env.space().n_items(),
                actual: space.n_items(),
            });
        }
        if env.n_users() == 0 {
            return Err(Error::EmptyResult);
        }
        let prototype = BanditModel::new(space.dim(), config.lambda, config.exploration)?;
        let n_models = if config.shared_model {
            1
        } else {
            env.n_users()
        };
        Ok(Self {
            reward: config.reward_model(),
            users: rng_for(config.seed, Stream::Users),
            clicks: rng_for(config.seed, Stream::Clicks),
            models: vec![prototype; n_models],
            config,
            space,
            env,
            round: 0,
        })
    }

    pub fn model(&self, user: usize) -> &BanditModel {
        if self.config.shared_model {
            &self.models[0]
        } else {
            &self.models[user]
        }
    }

    /// Plays one round.
    pub fn step(&mut self) -> Result<RoundLog> {
        self.round += 1;
        let user = self.users.gen_range(0..self.env.n_users());
        let slot = if self.config.shared_model { 0 } else { user };
        let list = select_list(&self.models[slot], &self.space, self.config.list_size, &[])?;
        let click = self
            .env
            .simulate_click(user, &list.items, &mut self.clicks)?;
        let feedback = Feedback::new(list.len(), click)?;
        self.reward
            .apply(&mut self.models[slot], &feedback, &list.features)?;

        let (_, best) = self.env.optimal(user, self.config.list_size)?;
        let shown = click_probability(&attraction_probabilities(
            &list.items,
            self.env.theta_star(user)?,
            self.env.space(),
        ));
        Ok(RoundLog {
            round: self.round,
            user,
            items: list.items,
            click,
            regret: best - shown,
        })
    }
}

impl Iterator for Simulator<'_> {
    type Item = Result<RoundLog>;

    fn next(&mut self) -> Option<Self::Item> {
        (self.round < self.config.rounds).then(|| self.step())
    }
}

/// Runs all configured rounds.
pub fn run(config: &SimConfig, space: FeatureSpace, env: &Environment) -> Result<Vec<RoundLog>> {
    Simulator::new(config.clone(), space, env)?.collect()
}
