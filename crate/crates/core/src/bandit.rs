//! Linear UCB model state and top-K list generation.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSpace};

/// Radicands below this are treated as a corrupted inverse covariance.
const RADICAND_FLOOR: f64 = -1e-12;

/// Ridge-regression state of one user (or of the shared model).
#[derive(Debug, Clone, PartialEq)]
pub struct BanditModel {
    pub(crate) minv: DMatrix<f64>,
    pub(crate) b: DVector<f64>,
    lambda: f64,
    c: f64,
}

impl BanditModel {
    /// `M⁻¹ = I/λ`, `B = 0`.
    pub fn new(dim: usize, lambda: f64, c: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "feature dimension must be positive".into(),
            ));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda {lambda} must be positive"
            )));
        }
        if !(c >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "exploration c {c} must be non-negative"
            )));
        }
        Ok(Self {
            minv: DMatrix::identity(dim, dim) / lambda,
            b: DVector::zeros(dim),
            lambda,
            c,
        })
    }

    /// A model whose estimate is exactly `theta`, with no exploration.
    pub(crate) fn point_estimate(theta: &[f64]) -> Result<Self> {
        let mut model = Self::new(theta.len(), 1.0, 0.0)?;
        model.b = DVector::from_column_slice(theta);
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn exploration(&self) -> f64 {
        self.c
    }

    pub fn minv(&self) -> &DMatrix<f64> {
        &self.minv
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Ridge estimate `M⁻¹ B`.
    pub fn theta_hat(&self) -> DVector<f64> {
        &self.minv * &self.b
    }

    /// `x·θ̂ + c·sqrt(x M⁻¹ xᵀ)`.
    pub fn ucb_score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let theta = self.theta_hat();
        let mean: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let xv = DVector::from_column_slice(x);
        let radicand = xv.dot(&(&self.minv * &xv));
        Ok(mean + self.c * confidence(radicand)?)
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }
}

fn confidence(radicand: f64) -> Result<f64> {
    if radicand < RADICAND_FLOOR || radicand.is_nan() {
        return Err(Error::Numeric(format!(
            "negative UCB radicand {radicand}: inverse covariance is not positive definite"
        )));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// An ordered recommendation list with the score and the exact feature
/// vector each item had when it was placed.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
    pub features: Vec<Vec<f64>>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Higher score first, lower item index on ties.
fn by_score_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Per-round cache of everything about an item that does not depend on the
/// list prefix.
struct Scorer<'a> {
    space: &'a FeatureSpace,
    minv: &'a DMatrix<f64>,
    theta: DVector<f64>,
    c: f64,
    latent_dim: usize,
    /// `l·θ_l` per item.
    latent_mean: Vec<f64>,
    /// `lᵀ A_ll l` per item.
    latent_quad: Vec<f64>,
    /// `(A_gl l)_j` for each topic `j` in the item's support.
    cross: Vec<Vec<f64>>,
}

impl<'a> Scorer<'a> {
    fn new(model: &'a BanditModel, space: &'a FeatureSpace) -> Self {
        let theta = model.theta_hat();
        let latent_dim = space.latent_dim();
        let m = space.n_items();
        let mut latent_mean = vec![0.0; m];
        let mut latent_quad = vec![0.0; m];
        let mut cross = vec![Vec::new(); m];
        if let Some(rows) = space.latent_rows() {
            let mut ax = vec![0.0; latent_dim];
            for i in 0..m {
                let l = rows.row(i);
                for (r, slot) in ax.iter_mut().enumerate() {
                    *slot = (0..latent_dim).map(|k| model.minv[(r, k)] * l[k]).sum();
                }
                latent_mean[i] = l.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
                latent_quad[i] = l.iter().zip(&ax).map(|(a, b)| a * b).sum();
                if let Some(topics) = space.topic_rows() {
                    cross[i] = topics
                        .support(i)
                        .iter()
                        .map(|&j| {
                            (0..latent_dim)
                                .map(|k| model.minv[(latent_dim + j, k)] * l[k])
                                .sum()
                        })
                        .collect();
                }
            }
        }
        Self {
            space,
            minv: &model.minv,
            theta,
            c: model.c,
            latent_dim,
            latent_mean,
            latent_quad,
            cross,
        }
    }

    fn score(&self, item: usize, coverage: &crate::features::TopicCoverage) -> Result<f64> {
        let mut mean = self.latent_mean[item];
        let mut quad = self.latent_quad[item];
        if let Some(topics) = self.space.topic_rows() {
            let support = topics.support(item);
            let base = topics.rows().row(item);
            let off = self.latent_dim;
            let gains: Vec<f64> = support
                .iter()
                .map(|&j| coverage.remaining(j) * base[j])
                .collect();
            for (s, (&j, g)) in support.iter().zip(&gains).enumerate() {
                mean += g * self.theta[off + j];
                if off > 0 {
                    quad += 2.0 * g * self.cross[item][s];
                }
                for (&j2, g2) in support.iter().zip(&gains) {
                    quad += g * g2 * self.minv[(off + j, off + j2)];
                }
            }
        }
        Ok(mean + self.c * confidence(quad)?)
    }
}

/// Builds a top-`k` list for `model` over `space`, never using items in
/// `exclude`.
///
/// Latent spaces rank once by UCB score. Topic and hybrid spaces fill the
/// list greedily: each position takes the best-scoring remaining item under
/// the coverage left by the items already placed.
pub fn select_list(
    model: &BanditModel,
    space: &FeatureSpace,
    k: usize,
    exclude: &[usize],
) -> Result<RankedList> {
    model.check_dim(space.dim())?;
    let m = space.n_items();
    let mut blocked = vec![false; m];
    for &i in exclude {
        if i < m {
            blocked[i] = true;
        }
    }
    let available = blocked.iter().filter(|b| !**b).count();
    if k > available {
        return Err(Error::NotEnoughCandidates {
            needed: k,
            available,
        });
    }
    let scorer = Scorer::new(model, space);

    if space.kind() == FeatureKind::Latent {
        let empty = space.empty_coverage();
        let mut scored = (0..m)
            .filter(|&i| !blocked[i])
            .map(|i| scorer.score(i, &empty).map(|s| (i, s)))
            .collect::<Result<Vec<_>>>()?;
        if k < scored.len() && k > 0 {
            scored.select_nth_unstable_by(k - 1, by_score_then_index);
        }
        scored.truncate(k);
        scored.sort_by(by_score_then_index);
        return Ok(RankedList {
            features: scored
                .iter()
                .map(|(i, _)| space.feature(*i, &empty))
                .collect(),
            items: scored.iter().map(|(i, _)| *i).collect(),
            scores: scored.iter().map(|(_, s)| *s).collect(),
        });
    }

    let mut coverage = space.empty_coverage();
    let mut list = RankedList {
        items: Vec::with_capacity(k),
        scores: Vec::with_capacity(k),
        features: Vec::with_capacity(k),
    };
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..m).filter(|&i| !blocked[i]) {
            let s = scorer.score(i, &coverage)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (item, score) = best.expect("candidate count checked above");
        list.features.push(space.feature(item, &coverage));
        list.items.push(item);
        list.scores.push(score);
        space.advance(&mut coverage, item);
        blocked[item] = true;
    }
    Ok(list)
}
