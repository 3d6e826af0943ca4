//! Brute-force references shared by the oracle and acceptance suites.
#![allow(dead_code)]

use cascade_exposure::data::InteractionMatrix;
use cascade_exposure::features::{topic_base_features, Rows};
use cascade_exposure::reward::update_standard;
use cascade_exposure::{BanditModel, FeatureSpace, Feedback};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// All ordered `k`-tuples of distinct indices below `m`, in lexicographic order.
pub fn tuples(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t: Vec<usize>| {
                (0..m)
                    .filter(|i| !t.contains(i))
                    .map(|i| [t.as_slice(), &[i]].concat())
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

/// Best list under the sequential objective: maximize the first position's
/// score, then the second given the first, and so on; ties go to the
/// lexicographically smaller tuple.
pub fn brute_force(model: &BanditModel, space: &FeatureSpace, k: usize) -> Vec<usize> {
    let mut best: Option<(Vec<f64>, Vec<usize>)> = None;
    for t in tuples(space.n_items(), k) {
        let scores: Vec<f64> = space
            .list_features(&t)
            .iter()
            .map(|x| model.ucb_score(x).unwrap())
            .collect();
        let better = match &best {
            None => true,
            Some((s, _)) => scores
                .iter()
                .zip(s)
                .find(|(a, b)| a != b)
                .is_some_and(|(a, b)| a > b),
        };
        if better {
            best = Some((scores, t));
        }
    }
    best.unwrap().1
}

pub fn random_topics(rng: &mut ChaCha8Rng, m: usize, topics: usize) -> InteractionMatrix {
    let item_topics: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let mut t: Vec<usize> = (0..topics).filter(|_| rng.gen_bool(0.4)).collect();
            if t.is_empty() {
                t.push(rng.gen_range(0..topics));
            }
            t
        })
        .collect();
    InteractionMatrix::from_parts(
        vec!["u".into()],
        (0..m).map(|i| format!("i{i}")).collect(),
        (0..topics).map(|j| format!("t{j}")).collect(),
        item_topics,
        vec![vec![0]],
    )
    .unwrap()
}

pub fn random_latent(rng: &mut ChaCha8Rng, m: usize) -> Rows {
    let rows: Vec<Vec<f64>> = (0..m).map(|_| random_vec(rng, 3)).collect();
    Rows::from_vecs(&rows).unwrap()
}

pub fn random_space(rng: &mut ChaCha8Rng, kind: usize, m: usize) -> FeatureSpace {
    match kind {
        0 => FeatureSpace::latent(random_latent(rng, m)),
        1 => {
            let matrix = random_topics(rng, m, 4);
            FeatureSpace::topic(topic_base_features(&matrix).unwrap())
        }
        _ => {
            let l = random_latent(rng, m);
            let matrix = random_topics(rng, m, 4);
            FeatureSpace::hybrid(l, topic_base_features(&matrix).unwrap()).unwrap()
        }
    }
}

pub fn trained_model(rng: &mut ChaCha8Rng, space: &FeatureSpace, c: f64) -> BanditModel {
    let mut model = BanditModel::new(space.dim(), 1.0, c).unwrap();
    for _ in 0..rng.gen_range(0..6) {
        let k = rng.gen_range(1..=space.n_items().min(3));
        let items: Vec<usize> = {
            let mut all: Vec<usize> = (0..space.n_items()).collect();
            for i in (1..all.len()).rev() {
                all.swap(i, rng.gen_range(0..=i));
            }
            all.truncate(k);
            all
        };
        let click = if rng.gen_bool(0.5) {
            Some(rng.gen_range(1..=k))
        } else {
            None
        };
        let fb = Feedback::new(k, click).unwrap();
        update_standard(&mut model, &fb, &space.list_features(&items)).unwrap();
    }
    model
}

pub fn brute_force_dot(space: &FeatureSpace, theta: &[f64], k: usize) -> Vec<usize> {
    let dot = |x: &Vec<f64>| x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
    let mut best: Option<(Vec<f64>, Vec<usize>)> = None;
    for t in tuples(space.n_items(), k) {
        let scores: Vec<f64> = space.list_features(&t).iter().map(dot).collect();
        let better = best.as_ref().is_none_or(|(s, _)| {
            scores
                .iter()
                .zip(s)
                .find(|(a, b)| a != b)
                .is_some_and(|(a, b)| a > b)
        });
        if better {
            best = Some((scores, t));
        }
    }
    best.unwrap().1
}
