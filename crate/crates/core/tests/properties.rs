use std::collections::{BTreeMap, BTreeSet, HashMap};

use cascade_exposure::data::{binarize, split_train_test, subsample, Rating, RawRatings, Scale};
use cascade_exposure::features::{advance_coverage, topic_gain, Rows, TopicCoverage};
use cascade_exposure::metrics::{gini, normalize, ExposureLedger};
use cascade_exposure::reward::{exposure_weight, update_exposure_aware, update_standard};
use cascade_exposure::rng::{rng_for, Stream};
use cascade_exposure::simulate::simulate_click;
use cascade_exposure::{select_list, BanditModel, FeatureSpace, Feedback, RewardModel};
use proptest::collection::vec;
use proptest::prelude::*;

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    vec(0.0..10.0f64, 2..40).prop_filter("needs mass", |v| v.iter().sum::<f64>() > 1e-6)
}

/// A list length, a click position within it (or none) and per-position features.
fn round(d: usize) -> impl Strategy<Value = (Option<usize>, Vec<Vec<f64>>)> {
    (1..6usize).prop_flat_map(move |k| {
        (
            prop_oneof![Just(None), (1..=k).prop_map(Some)],
            vec(vec(-1.0..1.0f64, d), k),
        )
    })
}

fn apply_all(
    model: &mut BanditModel,
    reward: &RewardModel,
    rounds: &[(Option<usize>, Vec<Vec<f64>>)],
) {
    for (click, feats) in rounds {
        let fb = Feedback::new(feats.len(), *click).unwrap();
        reward.apply(model, &fb, feats).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gini_is_bounded_and_permutation_invariant(x in distribution(), seed in any::<u64>()) {
        let p = normalize(&x).unwrap();
        let g = gini(&p).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&g), "gini {}", g);

        let mut shuffled = p.clone();
        let mut rng = rng_for(seed, Stream::Synthetic);
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        prop_assert!((gini(&shuffled).unwrap() - g).abs() < 1e-12);
    }

    #[test]
    fn gini_is_scale_invariant(x in distribution(), s in 1e-3..1e3f64) {
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        let a = gini(&normalize(&x).unwrap()).unwrap();
        let b = gini(&normalize(&scaled).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn transfer_to_richer_item_never_lowers_gini(
        x in distribution(),
        i in any::<prop::sample::Index>(),
        j in any::<prop::sample::Index>(),
        frac in 0.0..=1.0f64,
    ) {
        let p = normalize(&x).unwrap();
        let (mut lo, mut hi) = (i.index(p.len()), j.index(p.len()));
        prop_assume!(lo != hi);
        if p[lo] > p[hi] {
            std::mem::swap(&mut lo, &mut hi);
        }
        let mut q = p.clone();
        let delta = p[lo] * frac;
        q[lo] -= delta;
        q[hi] += delta;
        prop_assert!(gini(&q).unwrap() >= gini(&p).unwrap() - 1e-12);
    }

    #[test]
    fn normalization_sums_to_one(x in distribution()) {
        let total: f64 = normalize(&x).unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn examined_exposure_is_bounded_by_positional_and_raw(
        lists in vec((Just(12usize), 1..6usize, any::<u64>(), 0..7usize), 1..60)
    ) {
        let mut ledger = ExposureLedger::new(12);
        for (m, k, seed, click) in lists {
            let mut rng = rng_for(seed, Stream::Synthetic);
            let items = rand::seq::index::sample(&mut rng, m, k).into_vec();
            let click = (click >= 1 && click <= k).then_some(click);
            ledger.ingest(&items, click);
            for i in 0..12 {
                prop_assert!(ledger.examined[i] <= ledger.positional[i] + 1e-12);
                prop_assert!(ledger.positional[i] <= ledger.exposure[i] as f64 + 1e-12);
            }
        }
        prop_assert!(ledger.clicks <= ledger.rounds);
    }

    #[test]
    fn cascade_clicks_at_most_once(probs in vec(0.0..=1.0f64, 1..10), seed in any::<u64>()) {
        let rows: Vec<Vec<f64>> = probs.iter().map(|p| vec![*p]).collect();
        let space = FeatureSpace::latent(Rows::from_vecs(&rows).unwrap());
        let items: Vec<usize> = (0..probs.len()).collect();
        let mut rng = rng_for(seed, Stream::Clicks);
        if let Some(c) = simulate_click(&items, &[1.0], &space, &mut rng) {
            prop_assert!((1..=items.len()).contains(&c));
            // A certain item above the click would have been clicked first.
            prop_assert!(probs[..c - 1].iter().all(|p| *p < 1.0));
        } else {
            prop_assert!(probs.iter().all(|p| *p < 1.0));
        }
    }

    #[test]
    fn coverage_gain_is_submodular(
        base in vec(vec(0.0..1.0f64, 5), 1..8),
        extra in vec(vec(0.0..1.0f64, 5), 0..5),
        item in vec(0.0..1.0f64, 5),
    ) {
        let small = base.iter().fold(TopicCoverage::empty(5), |c, x| advance_coverage(&c, x));
        let large = extra.iter().fold(small.clone(), |c, x| advance_coverage(&c, x));
        let g_small = topic_gain(&item, small.covered());
        let g_large = topic_gain(&item, large.covered());
        for (a, b) in g_small.iter().zip(&g_large) {
            prop_assert!(a + 1e-15 >= *b);
        }
    }

    #[test]
    fn coverage_is_order_independent(rows in vec(vec(0.0..1.0f64, 4), 1..8), seed in any::<u64>()) {
        let forward = rows.iter().fold(TopicCoverage::empty(4), |c, x| advance_coverage(&c, x));
        let mut shuffled = rows.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng_for(seed, Stream::Synthetic));
        let other = shuffled.iter().fold(TopicCoverage::empty(4), |c, x| advance_coverage(&c, x));
        for (a, b) in forward.covered().iter().zip(other.covered()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_stays_symmetric_positive_definite(
        rounds in vec(round(4), 1..40),
        gamma in 0.0..0.5f64,
    ) {
        for reward in [RewardModel::Standard, RewardModel::ExposureAware { gamma }] {
            let mut model = BanditModel::new(4, 1.0, 0.1).unwrap();
            apply_all(&mut model, &reward, &rounds);
            let minv = model.minv();
            prop_assert!((minv - minv.transpose()).abs().max() <= 1e-10);
            prop_assert!(minv.clone().cholesky().is_some());
        }
    }

    #[test]
    fn both_rewards_share_the_inverse(rounds in vec(round(3), 1..30), gamma in 0.0..1.0f64) {
        let mut standard = BanditModel::new(3, 1.0, 0.5).unwrap();
        let mut aware = standard.clone();
        apply_all(&mut standard, &RewardModel::Standard, &rounds);
        apply_all(&mut aware, &RewardModel::ExposureAware { gamma }, &rounds);
        prop_assert_eq!(standard.minv(), aware.minv());
    }

    #[test]
    fn exposure_aware_matches_standard_for_top_clicks_without_penalty(
        rounds in vec(vec(vec(-1.0..1.0f64, 3), 1..5), 1..30),
    ) {
        let mut standard = BanditModel::new(3, 1.0, 0.5).unwrap();
        let mut aware = standard.clone();
        for feats in &rounds {
            let fb = Feedback::new(feats.len(), Some(1)).unwrap();
            update_standard(&mut standard, &fb, feats).unwrap();
            update_exposure_aware(&mut aware, &fb, feats, 0.0).unwrap();
        }
        prop_assert_eq!(standard.minv(), aware.minv());
        prop_assert_eq!(standard.b(), aware.b());
    }

    #[test]
    fn zero_gamma_touches_b_only_at_the_click((click, feats) in round(3)) {
        let mut model = BanditModel::new(3, 1.0, 0.5).unwrap();
        let fb = Feedback::new(feats.len(), click).unwrap();
        update_exposure_aware(&mut model, &fb, &feats, 0.0).unwrap();
        let expected: Vec<f64> = match click {
            Some(c) => feats[c - 1].iter().map(|x| x * (1.0 + c as f64).log2()).collect(),
            None => vec![0.0; 3],
        };
        for (got, want) in model.b().iter().zip(&expected) {
            prop_assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn positions_below_the_click_never_reach_the_model(
        (click, feats) in round(3),
        noise in vec(vec(-5.0..5.0f64, 3), 5),
        gamma in 0.0..0.1f64,
    ) {
        let mut perturbed = feats.clone();
        let cutoff = click.unwrap_or(feats.len());
        for (k, row) in perturbed.iter_mut().enumerate().skip(cutoff) {
            *row = noise[k].clone();
        }
        for reward in [RewardModel::Standard, RewardModel::ExposureAware { gamma }] {
            let mut a = BanditModel::new(3, 1.0, 0.2).unwrap();
            let mut b = a.clone();
            let fb = Feedback::new(feats.len(), click).unwrap();
            reward.apply(&mut a, &fb, &feats).unwrap();
            reward.apply(&mut b, &fb, &perturbed).unwrap();
            prop_assert_eq!(a.minv(), b.minv());
            prop_assert_eq!(a.b(), b.b());
        }
    }

    #[test]
    fn exposure_weight_is_increasing_in_position(k in 1..50usize, gamma in 1e-6..1.0f64) {
        // Reward branch: click at k versus click at k + 1.
        prop_assert!(exposure_weight(Some(k + 1), k + 1, gamma).unwrap() > exposure_weight(Some(k), k, gamma).unwrap());
        // Penalty branch: negative and shrinking toward zero further down.
        let here = exposure_weight(None, k, gamma).unwrap();
        let below = exposure_weight(None, k + 1, gamma).unwrap();
        prop_assert!(here < below && below < 0.0);
    }

    #[test]
    fn selection_has_no_duplicates_or_excluded_items(
        rows in vec(vec(-1.0..1.0f64, 3), 4..20),
        excluded in vec(0..20usize, 0..4),
        k in 1..4usize,
        c in 0.0..2.0f64,
        theta in vec(-1.0..1.0f64, 3),
    ) {
        let space = FeatureSpace::latent(Rows::from_vecs(&rows).unwrap());
        let mut model = BanditModel::new(3, 1.0, c).unwrap();
        let fb = Feedback::new(1, Some(1)).unwrap();
        update_standard(&mut model, &fb, &[theta]).unwrap();
        let available = (0..rows.len()).filter(|i| !excluded.contains(i)).count();
        prop_assume!(k <= available);
        let list = select_list(&model, &space, k, &excluded).unwrap();
        let distinct: BTreeSet<usize> = list.items.iter().copied().collect();
        prop_assert_eq!(distinct.len(), k);
        prop_assert!(list.items.iter().all(|i| !excluded.contains(i)));
        prop_assert_eq!(select_list(&model, &space, k, &excluded).unwrap().items, list.items);
    }

    #[test]
    fn latent_top_item_survives_positive_scaling(
        rows in vec(vec(-1.0..1.0f64, 3), 2..20),
        history in vec(round(3), 0..10),
        s in 1e-2..1e2f64,
    ) {
        let mut model = BanditModel::new(3, 1.0, 0.0).unwrap();
        apply_all(&mut model, &RewardModel::Standard, &history);
        let plain = Rows::from_vecs(&rows).unwrap();
        let scaled = plain.scaled(s);
        let a = select_list(&model, &FeatureSpace::latent(plain), 1, &[]).unwrap();
        let b = select_list(&model, &FeatureSpace::latent(scaled), 1, &[]).unwrap();
        prop_assert_eq!(a.items, b.items);
    }
}

fn ratings() -> impl Strategy<Value = RawRatings> {
    vec(((0..12usize, 0..15usize), 1..=5u8), 1..120).prop_map(|cells| {
        let mut seen = BTreeMap::new();
        for ((u, i), r) in cells {
            seen.entry((u, i)).or_insert(r);
        }
        let records = seen
            .into_iter()
            .map(|((u, i), r)| Rating {
                user: format!("u{u:02}"),
                item: format!("i{i:02}"),
                rating: f64::from(r),
            })
            .collect();
        let genres = (0..15)
            .map(|i| (format!("i{i:02}"), BTreeSet::from([format!("g{}", i % 4)])))
            .collect();
        RawRatings {
            records,
            genres,
            scale: Scale::Stars,
            malformed: 0,
            dropped_without_metadata: 0,
        }
    })
}

fn counts<'a>(
    records: impl Iterator<Item = &'a Rating>,
) -> (HashMap<String, usize>, HashMap<String, usize>) {
    let mut users = HashMap::new();
    let mut items = HashMap::new();
    for r in records.filter(|r| r.rating > 0.0) {
        *users.entry(r.user.clone()).or_insert(0) += 1;
        *items.entry(r.item.clone()).or_insert(0) += 1;
    }
    (users, items)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn binarize_is_idempotent(raw in ratings(), threshold in 1.0..5.0f64) {
        let once = binarize(&raw, threshold);
        let twice = binarize(&once, threshold);
        prop_assert_eq!(once.records, twice.records);
    }

    #[test]
    fn subsample_never_adds_interactions(
        raw in ratings(),
        core in 0..4usize,
        top_users in prop::option::of(1..12usize),
        top_items in prop::option::of(1..15usize),
    ) {
        if let Ok(out) = subsample(&raw, core, top_users, top_items) {
            let input: BTreeSet<(String, String)> =
                raw.records.iter().map(|r| (r.user.clone(), r.item.clone())).collect();
            prop_assert!(out.records.iter().all(|r| input.contains(&(r.user.clone(), r.item.clone()))));
            let (u_in, i_in) = counts(raw.records.iter());
            let (u_out, i_out) = counts(out.records.iter());
            prop_assert!(u_out.iter().all(|(u, n)| *n <= u_in[u]));
            prop_assert!(i_out.iter().all(|(i, n)| *n <= i_in[i]));
            prop_assert!(top_users.is_none_or(|t| u_out.len() <= t));
            prop_assert!(top_items.is_none_or(|t| i_out.len() <= t));
        }
    }

    #[test]
    fn split_partitions_each_retained_profile(raw in ratings(), seed in any::<u64>(), ratio in 0.2..0.8f64) {
        let bin = binarize(&raw, 3.0);
        if let Ok(split) = split_train_test(&bin, ratio, seed) {
            prop_assert!(split.train.same_index(&split.test));
            let (users, items) = (split.train.users(), split.train.items());
            let pairs = |m: &cascade_exposure::data::InteractionMatrix| -> BTreeSet<(String, String)> {
                (0..m.n_users())
                    .flat_map(|u| m.user_items(u).iter().map(move |&i| (users[u].clone(), items[i].clone())))
                    .collect()
            };
            let train = pairs(&split.train);
            let test = pairs(&split.test);
            prop_assert!(train.is_disjoint(&test));
            let retained: BTreeSet<&String> = users.iter().collect();
            let input: BTreeSet<(String, String)> = bin
                .records
                .iter()
                .filter(|r| r.rating > 0.0 && retained.contains(&r.user))
                .map(|r| (r.user.clone(), r.item.clone()))
                .collect();
            let union: BTreeSet<_> = train.union(&test).cloned().collect();
            prop_assert_eq!(union, input);
            prop_assert_eq!(split_train_test(&bin, ratio, seed).unwrap().train.nnz(), split.train.nnz());
        }
    }
}
