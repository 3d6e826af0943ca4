//! Simulation engine for top-K linear cascading bandits with an
//! exposure-aware reward model and dynamic exposure-fairness metrics.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`data`]: load ratings and genres, binarize, subsample, split per user.
//! - [`features`]: SVD latent factors, topic-coverage gains, hybrid spaces,
//!   ground-truth user preferences.
//! - [`bandit`]: per-user ridge state and UCB top-K list selection.
//! - [`reward`]: standard and exposure-aware model updates.
//! - [`simulate`]: the round loop against a cascade click simulator.
//! - [`metrics`]: exposure ledgers, Gini-based EO/EI, coverage, McNemar.
//! - [`experiment`]: grid runs over algorithms, reward models, `c` and seeds,
//!   with CSV output.

// `!(x > 0.0)` is the deliberate NaN-rejecting form throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod reward;
pub mod rng;
pub mod simulate;
pub mod synth;

pub use bandit::{select_list, BanditModel, RankedList};
pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureSpace};
pub use metrics::ExposureLedger;
pub use reward::{Feedback, RewardModel};
pub use simulate::{Algorithm, RewardKind, RoundLog, SimConfig};
