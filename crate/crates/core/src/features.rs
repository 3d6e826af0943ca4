//! Item feature spaces: SVD latent factors, topic-coverage rows and their
//! concatenation, plus ground-truth user preferences fitted on test data.
//!
//! Topic features are prefix-dependent. The feature of an item at some list
//! position is the coverage gain it adds on top of the items already placed,
//! so callers thread a [`TopicCoverage`] through list construction.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};

/// Row-major dense matrix with one row per item (or user).
#[derive(Debug, Clone, PartialEq)]
pub struct Rows {
    dim: usize,
    data: Vec<f64>,
}

impl Rows {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_vecs(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Multiplies every entry by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }
}

/// Per-topic probability that a list covers the topic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicCoverage {
    covered: Vec<f64>,
}

impl TopicCoverage {
    pub fn empty(topics: usize) -> Self {
        Self {
            covered: vec![0.0; topics],
        }
    }

    pub fn from_probabilities(covered: Vec<f64>) -> Result<Self> {
        if covered.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(
                "coverage entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { covered })
    }

    pub fn covered(&self) -> &[f64] {
        &self.covered
    }

    /// Coverage gain per topic from appending an item with `base` row.
    pub fn gain(&self, base: &[f64]) -> Vec<f64> {
        topic_gain(base, &self.covered)
    }

    /// Appends an item: `1 - (1 - covered) * (1 - base)` per topic.
    pub fn advance(&mut self, base: &[f64]) {
        for (c, x) in self.covered.iter_mut().zip(base) {
            *c = (1.0 - (1.0 - *c) * (1.0 - x)).clamp(0.0, 1.0);
        }
    }

    pub(crate) fn remaining(&self, topic: usize) -> f64 {
        1.0 - self.covered[topic]
    }
}

/// `(1 - covered_j) * base_j` for every topic `j`.
pub fn topic_gain(base: &[f64], covered: &[f64]) -> Vec<f64> {
    base.iter()
        .zip(covered)
        .map(|(x, c)| (1.0 - c) * x)
        .collect()
}

/// Returns the coverage after appending `base`, leaving `state` untouched.
pub fn advance_coverage(state: &TopicCoverage, base: &[f64]) -> TopicCoverage {
    let mut next = state.clone();
    next.advance(base);
    next
}

/// Topic rows with each item's non-zero topic indices kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicRows {
    rows: Rows,
    support: Vec<Vec<usize>>,
}

impl TopicRows {
    pub fn rows(&self) -> &Rows {
        &self.rows
    }

    pub fn support(&self, item: usize) -> &[usize] {
        &self.support[item]
    }
}

/// Uniform distribution over each item's genres.
pub fn topic_base_features(matrix: &InteractionMatrix) -> Result<TopicRows> {
    let topics = matrix.n_topics();
    if topics == 0 {
        return Err(Error::InvalidParameter("empty topic vocabulary".into()));
    }
    let mut data = vec![0.0; matrix.n_items() * topics];
    let mut support = Vec::with_capacity(matrix.n_items());
    for item in 0..matrix.n_items() {
        let labels = matrix.item_topics(item);
        if labels.is_empty() {
            return Err(Error::ItemWithoutGenre(matrix.items()[item].clone()));
        }
        let w = 1.0 / labels.len() as f64;
        let mut s: Vec<usize> = labels.to_vec();
        s.sort_unstable();
        s.dedup();
        for &j in &s {
            data[item * topics + j] = w;
        }
        support.push(s);
    }
    Ok(TopicRows {
        rows: Rows::new(topics, data)?,
        support,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Latent,
    Topic,
    Hybrid,
}

/// Item features used for scoring. Latent features are static; topic and
/// hybrid features carry a prefix-dependent topic-gain block placed after
/// the latent block.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    kind: FeatureKind,
    latent: Option<Rows>,
    topic: Option<TopicRows>,
}

impl FeatureSpace {
    pub fn latent(rows: Rows) -> Self {
        Self {
            kind: FeatureKind::Latent,
            latent: Some(rows),
            topic: None,
        }
    }

    pub fn topic(rows: TopicRows) -> Self {
        Self {
            kind: FeatureKind::Topic,
            latent: None,
            topic: Some(rows),
        }
    }

    /// Concatenates latent and topic blocks over the same item index.
    pub fn hybrid(latent: Rows, topic: TopicRows) -> Result<Self> {
        if latent.len() != topic.rows.len() {
            return Err(Error::DimensionMismatch {
                expected: latent.len(),
                actual: topic.rows.len(),
            });
        }
        Ok(Self {
            kind: FeatureKind::Hybrid,
            latent: Some(latent),
            topic: Some(topic),
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn n_items(&self) -> usize {
        self.latent
            .as_ref()
            .map(Rows::len)
            .or_else(|| self.topic.as_ref().map(|t| t.rows.len()))
            .unwrap_or(0)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent.as_ref().map_or(0, Rows::dim)
    }

    pub fn topic_dim(&self) -> usize {
        self.topic.as_ref().map_or(0, |t| t.rows.dim())
    }

    pub fn dim(&self) -> usize {
        self.latent_dim() + self.topic_dim()
    }

    pub fn latent_rows(&self) -> Option<&Rows> {
        self.latent.as_ref()
    }

    pub fn topic_rows(&self) -> Option<&TopicRows> {
        self.topic.as_ref()
    }

    pub fn is_prefix_dependent(&self) -> bool {
        self.topic.is_some()
    }

    /// Coverage state for an empty list.
    pub fn empty_coverage(&self) -> TopicCoverage {
        TopicCoverage::empty(self.topic_dim())
    }

    /// Effective feature of `item` given the coverage of the list so far.
    pub fn feature(&self, item: usize, coverage: &TopicCoverage) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        if let Some(l) = &self.latent {
            x.extend_from_slice(l.row(item));
        }
        if let Some(t) = &self.topic {
            x.extend(coverage.gain(t.rows.row(item)));
        }
        x
    }

    /// Feature with an empty prefix.
    pub fn base_feature(&self, item: usize) -> Vec<f64> {
        self.feature(item, &self.empty_coverage())
    }

    /// Advances `coverage` past `item`; a no-op for latent spaces.
    pub fn advance(&self, coverage: &mut TopicCoverage, item: usize) {
        if let Some(t) = &self.topic {
            coverage.advance(t.rows.row(item));
        }
    }

    /// Effective features of an ordered list, each computed against the
    /// coverage of the items placed before it.
    pub fn list_features(&self, items: &[usize]) -> Vec<Vec<f64>> {
        let mut coverage = self.empty_coverage();
        items
            .iter()
            .map(|&i| {
                let x = self.feature(i, &coverage);
                self.advance(&mut coverage, i);
                x
            })
            .collect()
    }
}

/// Rank-`d` factorization of a binary interaction matrix.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub item_factors: Rows,
    pub user_factors: Rows,
    pub singular_values: Vec<f64>,
}

impl Factorization {
    /// Frobenius norm of `relevance - user_factors * item_factorsᵀ`.
    pub fn reconstruction_error(&self, matrix: &InteractionMatrix) -> f64 {
        let mut sq = 0.0;
        for u in 0..matrix.n_users() {
            let pu = self.user_factors.row(u);
            for i in 0..matrix.n_items() {
                let qi = self.item_factors.row(i);
                let est: f64 = pu.iter().zip(qi).map(|(a, b)| a * b).sum();
                let target = if matrix.is_relevant(u, i) { 1.0 } else { 0.0 };
                sq += (target - est) * (target - est);
            }
        }
        sq.sqrt()
    }
}

const OVERSAMPLING: usize = 8;

/// `A * dense` with `A` the users × items relevance matrix.
fn sparse_mul(matrix: &InteractionMatrix, dense: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(matrix.n_users(), dense.ncols());
    for u in 0..matrix.n_users() {
        for &i in matrix.user_items(u) {
            for c in 0..dense.ncols() {
                out[(u, c)] += dense[(i, c)];
            }
        }
    }
    out
}

/// `Aᵀ * dense`.
fn sparse_mul_t(matrix: &InteractionMatrix, dense: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(matrix.n_items(), dense.ncols());
    for u in 0..matrix.n_users() {
        for &i in matrix.user_items(u) {
            for c in 0..dense.ncols() {
                out[(i, c)] += dense[(u, c)];
            }
        }
    }
    out
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Randomized subspace iteration with `power_iterations` passes and a
/// symmetric `Σ^{1/2}` split between user and item factors.
pub fn truncated_svd(
    matrix: &InteractionMatrix,
    d: usize,
    power_iterations: usize,
    seed: u64,
) -> Result<Factorization> {
    let (n, m) = (matrix.n_users(), matrix.n_items());
    let bound = n.min(m);
    if d == 0 || d > bound {
        return Err(Error::RankTooLarge {
            requested: d,
            bound,
        });
    }
    let width = (d + OVERSAMPLING).min(bound);
    let mut rng = rng_for(seed, Stream::Svd);
    let omega = DMatrix::from_fn(m, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(sparse_mul(matrix, &omega));
    for _ in 0..power_iterations {
        let z = orthonormalize(sparse_mul_t(matrix, &q));
        q = orthonormalize(sparse_mul(matrix, &z));
    }

    // Bᵀ = Aᵀ Q is m × width; its SVD gives Bᵀ = V S Ubᵀ.
    let bt = sparse_mul_t(matrix, &q);
    let svd = bt.svd(true, true);
    let (v, ubt) = match (svd.u, svd.v_t) {
        (Some(v), Some(ubt)) => (v, ubt),
        _ => return Err(Error::Numeric("SVD failed to produce factors".into())),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(d);

    let u = &q * ubt.transpose();
    let mut items = Vec::with_capacity(m * d);
    let mut users = Vec::with_capacity(n * d);
    let sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    for i in 0..m {
        for (c, &k) in order.iter().enumerate() {
            items.push(v[(i, k)] * sigma[c].sqrt());
        }
    }
    for r in 0..n {
        for (c, &k) in order.iter().enumerate() {
            users.push(u[(r, k)] * sigma[c].sqrt());
        }
    }
    Ok(Factorization {
        item_factors: Rows::new(d, items)?,
        user_factors: Rows::new(d, users)?,
        singular_values: sigma,
    })
}

/// Ridge fit of every user's binary test relevance onto the base rows of
/// `features`: `θ*_u = (XᵀX + ridge·I)⁻¹ Xᵀ y_u`.
pub fn derive_user_truth(
    test: &InteractionMatrix,
    features: &FeatureSpace,
    ridge: f64,
) -> Result<Vec<Vec<f64>>> {
    if features.n_items() != test.n_items() {
        return Err(Error::DimensionMismatch {
            expected: test.n_items(),
            actual: features.n_items(),
        });
    }
    if !(ridge > 0.0) {
        return Err(Error::InvalidParameter("ridge must be positive".into()));
    }
    let d = features.dim();
    let base: Vec<Vec<f64>> = (0..test.n_items())
        .map(|i| features.base_feature(i))
        .collect();
    let x = Rows::from_vecs(&base)?.to_matrix();
    let gram = x.tr_mul(&x) + DMatrix::identity(d, d) * ridge;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("ridge normal matrix not positive definite".into()))?;

    Ok((0..test.n_users())
        .map(|u| {
            let mut rhs = DVector::zeros(d);
            for &i in test.user_items(u) {
                for (k, v) in base[i].iter().enumerate() {
                    rhs[k] += v;
                }
            }
            chol.solve(&rhs).iter().copied().collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn matrix(
        n: usize,
        m: usize,
        topics: usize,
        rows: Vec<Vec<usize>>,
        item_topics: Vec<Vec<usize>>,
    ) -> InteractionMatrix {
        InteractionMatrix::from_parts(
            (0..n).map(|u| format!("u{u}")).collect(),
            (0..m).map(|i| format!("i{i}")).collect(),
            (0..topics).map(|t| format!("t{t}")).collect(),
            item_topics,
            rows,
        )
        .unwrap()
    }

    #[test]
    fn rank_one_matrix_recovered() {
        // Every user likes only item 0: A = 1·e0ᵀ, singular value sqrt(n).
        let n = 6;
        let m = matrix(n, 4, 1, vec![vec![0]; n], vec![vec![0]; 4]);
        let f = truncated_svd(&m, 1, 2, 3).unwrap();
        assert!(f.reconstruction_error(&m) < 1e-6);
        assert_abs_diff_eq!(f.singular_values[0], (n as f64).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn identity_full_rank_exact() {
        let m = matrix(4, 4, 1, (0..4).map(|i| vec![i]).collect(), vec![vec![0]; 4]);
        let f = truncated_svd(&m, 4, 2, 11).unwrap();
        assert!(f.reconstruction_error(&m) < 1e-8);
    }

    #[test]
    fn svd_rank_bound() {
        let m = matrix(2, 3, 1, vec![vec![0], vec![1]], vec![vec![0]; 3]);
        assert!(matches!(
            truncated_svd(&m, 3, 2, 0),
            Err(Error::RankTooLarge { .. })
        ));
        assert!(truncated_svd(&m, 0, 2, 0).is_err());
    }

    #[test]
    fn svd_is_deterministic() {
        let m = matrix(
            3,
            3,
            1,
            vec![vec![0, 1], vec![1], vec![2, 0]],
            vec![vec![0]; 3],
        );
        let a = truncated_svd(&m, 2, 2, 5).unwrap();
        let b = truncated_svd(&m, 2, 2, 5).unwrap();
        assert_eq!(a.item_factors, b.item_factors);
    }

    #[test]
    fn topic_rows_uniform_over_genres() {
        let m = matrix(1, 2, 3, vec![vec![0]], vec![vec![0], vec![0, 1]]);
        let t = topic_base_features(&m).unwrap();
        assert_eq!(t.rows().row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(t.rows().row(1), &[0.5, 0.5, 0.0]);
        assert_eq!(t.support(1), &[0, 1]);
    }

    #[test]
    fn gain_examples() {
        assert_eq!(topic_gain(&[0.5, 0.5, 0.0], &[0.0; 3]), vec![0.5, 0.5, 0.0]);
        assert_eq!(topic_gain(&[0.5, 0.5, 0.0], &[1.0; 3]), vec![0.0; 3]);
        // list coverage 1 - Π(1 - p): before [0.5, 0, 0], after [0.75, 0.5, 0]
        assert_eq!(
            topic_gain(&[0.5, 0.5, 0.0], &[0.5, 0.0, 0.0]),
            vec![0.25, 0.5, 0.0]
        );
    }

    #[test]
    fn advance_examples() {
        let c = advance_coverage(&TopicCoverage::empty(2), &[1.0, 0.0]);
        assert_eq!(c.covered(), &[1.0, 0.0]);
        let c = advance_coverage(
            &TopicCoverage::from_probabilities(vec![0.5, 0.0]).unwrap(),
            &[0.5, 0.0],
        );
        assert_eq!(c.covered(), &[0.75, 0.0]);
        let twice = advance_coverage(&c, &[0.5, 0.0]);
        assert!(twice.covered().iter().zip(c.covered()).all(|(a, b)| a >= b));
        assert!(TopicCoverage::from_probabilities(vec![1.5]).is_err());
    }

    #[test]
    fn hybrid_concatenates() {
        let m = matrix(1, 2, 2, vec![vec![0]], vec![vec![0], vec![1]]);
        let topic = topic_base_features(&m).unwrap();
        let latent = Rows::from_vecs(&[vec![0.3, -0.2], vec![0.1, 0.4]]).unwrap();
        let h = FeatureSpace::hybrid(latent.clone(), topic.clone()).unwrap();
        assert_eq!(h.dim(), 4);
        assert_eq!(h.base_feature(0), vec![0.3, -0.2, 1.0, 0.0]);

        let mut saturated = h.empty_coverage();
        h.advance(&mut saturated, 0);
        h.advance(&mut saturated, 1);
        assert_eq!(h.feature(1, &saturated), vec![0.1, 0.4, 0.0, 0.0]);

        let short = Rows::from_vecs(&[vec![0.3, -0.2]]).unwrap();
        assert!(FeatureSpace::hybrid(short, topic).is_err());
    }

    #[test]
    fn user_truth_closed_form() {
        // Items x=[1,0] liked, x=[0,1] not: (XᵀX + λI)⁻¹ Xᵀy = [1/(1+λ), 0].
        let test = matrix(2, 2, 2, vec![vec![0], vec![]], vec![vec![0], vec![1]]);
        let space = FeatureSpace::topic(topic_base_features(&test).unwrap());
        let truth = derive_user_truth(&test, &space, 1e-9).unwrap();
        assert_abs_diff_eq!(truth[0][0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(truth[0][1], 0.0, epsilon = 1e-8);
        assert_eq!(truth[1], vec![0.0, 0.0]);

        let heavy = derive_user_truth(&test, &space, 1e12).unwrap();
        assert!(heavy[0].iter().all(|v| v.abs() < 1e-11));
        assert!(derive_user_truth(&test, &space, 0.0).is_err());
    }
}
