mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crm::affine_hull::{
    enumerate_hull, hull_via_components, in_affine_hull, simulate_hull_growth_with, GrowthOptions,
};
use crm::attribute_space::{
    cartesian_product_of_marginals, decode, one_hot_encode, AttributeSpec, Group, GroupSet,
};
use crm::crm::{extrapolate_bias, BiasSource, ExtrapolatedBias, PriorSource, TestPredictor};
use crm::energy_model::{EnergyModel, FeatureMap};
use crm::evaluation::{evaluate, oracle_agreement};
use crm::synthetic::{
    bayes_posterior, drop_group, make_2d_quadrant_spec, make_orthogonal_means, sample_dataset,
    ShiftScenario, Side,
};
use crm::table::GroupTable;

use common::{analytic_bias, analytic_model, tv};

fn spec_strategy() -> impl Strategy<Value = AttributeSpec> {
    prop::collection::vec(1usize..7, 1..5)
        .prop_filter("grid at most 10^4", |c| {
            c.iter().product::<usize>() <= 10_000
        })
        .prop_map(|c| AttributeSpec::new(c).unwrap())
}

fn two_attribute_instance() -> impl Strategy<Value = (AttributeSpec, GroupSet)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(d1, d2)| {
        prop::collection::vec((0..d1, 0..d2), 1..=12).prop_map(move |pairs| {
            let spec = AttributeSpec::new(vec![d1, d2]).unwrap();
            let set = pairs
                .into_iter()
                .map(|(a, b)| Group::from([a, b]))
                .collect();
            (spec, set)
        })
    })
}

fn random_groups(spec: &AttributeSpec, k: usize, seed: u64) -> GroupSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = spec.total_groups().unwrap();
    (0..k)
        .map(|_| spec.group_at(rng.random_range(0..total)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_decode_round_trip(spec in spec_strategy()) {
        for g in spec.groups() {
            let enc = one_hot_encode(&g, &spec).unwrap();
            prop_assert_eq!(decode(enc.as_slice(), &spec).unwrap(), g);
        }
    }

    #[test]
    fn cartesian_product_size(spec in spec_strategy(), k in 1usize..20, seed in any::<u64>()) {
        let s = random_groups(&spec, k, seed);
        let expected: usize = (0..spec.num_attributes()).map(|i| s.marginal_values(i).len()).product();
        prop_assert_eq!(cartesian_product_of_marginals(&s, &spec).unwrap().len(), expected);
    }

    #[test]
    fn components_hull_equals_enumeration((spec, train) in two_attribute_instance()) {
        let fast = hull_via_components(&train, &spec).unwrap();
        let slow = enumerate_hull(&train, &spec).unwrap();
        prop_assert!(fast.same_members(&slow));
    }

    #[test]
    fn hull_is_monotone_and_idempotent((spec, train) in two_attribute_instance()) {
        let hull = enumerate_hull(&train, &spec).unwrap();
        prop_assert!(train.is_subset(&hull));
        prop_assert!(enumerate_hull(&hull, &spec).unwrap().same_members(&hull));
    }

    #[test]
    fn member_coefficients_reconstruct(spec in spec_strategy(), k in 1usize..8, seed in any::<u64>()) {
        let train = random_groups(&spec, k, seed);
        let encs: Vec<Vec<f64>> = train.iter().map(|g| one_hot_encode(g, &spec).unwrap().as_slice().to_vec()).collect();
        for g in enumerate_hull(&train, &spec).unwrap().iter() {
            let r = in_affine_hull(g, &train, &spec).unwrap();
            prop_assert!(r.is_member);
            let alpha = r.coefficients.unwrap();
            prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            let target = one_hot_encode(g, &spec).unwrap();
            let err: f64 = (0..spec.onehot_len())
                .map(|j| (alpha.iter().zip(&encs).map(|(a, e)| a * e[j]).sum::<f64>() - target.as_slice()[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            prop_assert!(err <= 1e-8, "residual {}", err);
        }
    }

    #[test]
    fn evaluate_is_permutation_invariant(n in 1usize..200, seed in any::<u64>()) {
        let spec = AttributeSpec::new(vec![3, 2]).unwrap();
        let grid = spec.full_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<Group> = (0..n).map(|_| spec.group_at(rng.random_range(0..6))).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let a = evaluate(&preds, &labels, 0, &grid).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let b = evaluate(
            &order.iter().map(|&i| preds[i]).collect::<Vec<_>>(),
            &order.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>(),
            0,
            &grid,
        )
        .unwrap();
        prop_assert_eq!(a.groups, b.groups);
        prop_assert_eq!(a.average_acc, b.average_acc);
        prop_assert_eq!(a.worst_group_acc, b.worst_group_acc);
        prop_assert_eq!(a.balanced_acc, b.balanced_acc);
    }

    #[test]
    fn argmax_ignores_a_shared_shift(seed in any::<u64>(), c in -1e3f64..1e3) {
        let aed = make_2d_quadrant_spec();
        let grid = aed.spec.full_grid();
        let model = Arc::new(analytic_model(&aed, &GroupTable::uniform(grid.clone())));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let bias = model.bias_table();
        let p = TestPredictor::new("t", model.clone(), &GroupTable::uniform(grid.clone()), bias.clone(), BiasSource::Learned, PriorSource::Uniform).unwrap();
        let shifted = TestPredictor::new("t", model, &GroupTable::uniform(grid), bias.map(|b| b + c), BiasSource::Learned, PriorSource::Uniform).unwrap();
        let (a, b) = (p.predict(&x).unwrap(), shifted.predict(&x).unwrap());
        prop_assert_eq!(a.argmax_group(), b.argmax_group());
    }
}

#[test]
fn bayes_posterior_is_normalized() {
    let spec = AttributeSpec::uniform(3, 3).unwrap();
    let aed = make_orthogonal_means(&spec, 12, 5).unwrap();
    let prior = GroupTable::uniform(spec.full_grid());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let total: f64 = bayes_posterior(&x, &aed, &prior)
            .unwrap()
            .values
            .iter()
            .sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn spanning_event_matches_hull_enumeration() {
    for (m, d) in [(2, 3), (2, 5), (3, 3), (3, 2)] {
        let spec = AttributeSpec::uniform(m, d).unwrap();
        let total = spec.total_groups().unwrap();
        let opts = GrowthOptions {
            threads: 1,
            exact_checkpoints: true,
        };
        let curve = simulate_hull_growth_with(&spec, 300, 11, 400, &opts).unwrap();
        for t in &curve.trials {
            assert!(!t.checkpoints.is_empty());
            for &(s, size) in &t.checkpoints {
                assert_eq!(
                    size == total,
                    t.ranks[s - 1] == curve.full_rank,
                    "m={m} d={d} trial {}",
                    t.trial
                );
            }
            let last = t.checkpoints.last().unwrap().1;
            assert_eq!(t.completed(), last == total);
        }
    }
}

#[test]
fn analytic_model_reproduces_bayes_posterior() {
    let aed = make_2d_quadrant_spec();
    let grid = aed.spec.full_grid();
    let prior = GroupTable::normalized(grid.clone(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let model = analytic_model(&aed, &prior);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let fitted = model.log_posterior_train(&x).unwrap().map(f64::exp);
        assert!(tv(&fitted, &bayes_posterior(&x, &aed, &prior).unwrap()) < 1e-12);
    }
}

#[test]
fn swapping_the_prior_reweights_exactly() {
    // no dropped group: only log p -> log q changes
    for aed in [
        make_2d_quadrant_spec(),
        make_orthogonal_means(&AttributeSpec::new(vec![2, 3]).unwrap(), 6, 4).unwrap(),
    ] {
        let grid = aed.spec.full_grid();
        let k = grid.len();
        let p = GroupTable::normalized(grid.clone(), (1..=k).map(|i| i as f64).collect()).unwrap();
        let q = GroupTable::normalized(
            grid.clone(),
            (1..=k)
                .map(|i| ((k + 1 - i) * (k + 1 - i)) as f64)
                .collect(),
        )
        .unwrap();
        let model = Arc::new(analytic_model(&aed, &p));
        let predictor = TestPredictor::new(
            "swap",
            model.clone(),
            &q,
            model.bias_table(),
            BiasSource::Learned,
            PriorSource::Given,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x: Vec<f64> = (0..aed.ambient_dim)
                .map(|_| rng.random_range(-3.0..3.0))
                .collect();
            let d = tv(
                &predictor.predict(&x).unwrap(),
                &bayes_posterior(&x, &aed, &q).unwrap(),
            );
            assert!(d <= 1e-6, "tv {d}");
        }
    }
}

#[test]
fn extrapolated_bias_recovers_the_true_bias_for_an_unseen_group() {
    let aed = make_2d_quadrant_spec();
    let grid = aed.spec.full_grid();
    let scenario = drop_group(&grid, &Group::from([0, 0]), &aed.spec).unwrap();
    let model = Arc::new(analytic_model(&aed, &scenario.train_prior));
    let train = sample_dataset(&aed, Side::Train, &scenario, 200_000, 9).unwrap();
    let b_star = extrapolate_bias(&model, &train, &grid).unwrap();
    for (g, b) in b_star.table.iter() {
        let truth = analytic_bias(&aed, g);
        assert!((b - truth).abs() < 0.03, "{g}: {b} vs {truth}");
    }
    // and the resulting predictor is the Bayes predictor under the uniform test prior
    let predictor = TestPredictor::crm(model, &b_star, &grid).unwrap();
    let test = sample_dataset(&aed, Side::Test, &scenario, 2_000, 9).unwrap();
    let uniform = GroupTable::uniform(grid);
    let post: Vec<GroupTable> = test.rows().map(|x| predictor.predict(x).unwrap()).collect();
    let bayes: Vec<GroupTable> = test
        .rows()
        .map(|x| bayes_posterior(x, &aed, &uniform).unwrap())
        .collect();
    let o = oracle_agreement(&post, &bayes).unwrap();
    assert!(o.agreement > 0.99 && o.mean_tv < 0.01, "{o:?}");
}

#[test]
fn unseen_logit_is_the_affine_combination_of_seen_ones() {
    let spec = AttributeSpec::new(vec![3, 3]).unwrap();
    let grid = spec.full_grid();
    let train: GroupSet = [[0, 0], [0, 1], [1, 1], [1, 2], [2, 2]]
        .iter()
        .map(|g| Group::from(*g))
        .collect();
    let scenario = ShiftScenario::uniform(train.clone(), grid.clone(), &spec).unwrap();
    for map in [FeatureMap::default(), FeatureMap::Hidden { width: 5 }] {
        let mut model = EnergyModel::new(spec.clone(), 4, map, &scenario.train_prior, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        model
            .params_mut()
            .iter_mut()
            .for_each(|p| *p = rng.random_range(-1.0..1.0));
        let model = Arc::new(model);
        let b_star = ExtrapolatedBias {
            table: GroupTable::new(grid.clone(), (0..9).map(|i| 0.1 * i as f64).collect()).unwrap(),
            n_samples: 1,
            std_error: None,
        };
        let predictor = TestPredictor::crm(model.clone(), &b_star, &grid).unwrap();
        let log_q = -(9f64).ln();
        for z in grid.iter().filter(|z| !train.contains(z)) {
            let alpha = in_affine_hull(z, &train, &spec)
                .unwrap()
                .coefficients
                .unwrap();
            assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for _ in 0..20 {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let e = model.energies(&x).unwrap();
                let combined: f64 = alpha
                    .iter()
                    .zip(train.iter())
                    .map(|(a, g)| -a * model.group_energy(&e, g))
                    .sum();
                let expected = combined + log_q - b_star.table.get(z).unwrap();
                let got = predictor.logits(&x).unwrap().get(z).unwrap();
                assert!((got - expected).abs() < 1e-9, "{z}: {got} vs {expected}");
            }
        }
    }
}

#[test]
fn random_argmaxes_agree_about_one_in_k() {
    let spec = AttributeSpec::uniform(2, 3).unwrap();
    let grid = spec.full_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut draw = || {
        let w: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        GroupTable::normalized(grid.clone(), w).unwrap()
    };
    let n = 20_000;
    let a: Vec<GroupTable> = (0..n).map(|_| draw()).collect();
    let b: Vec<GroupTable> = (0..n).map(|_| draw()).collect();
    let agree = oracle_agreement(&a, &b).unwrap().agreement;
    // binomial sd at p = 1/9 is about 0.0022
    assert!((agree - 1.0 / 9.0).abs() < 0.01, "{agree}");
}
