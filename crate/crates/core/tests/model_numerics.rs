use copattern::eval::roc_auc;
use copattern::models::cv::CvConfig;
use copattern::models::{
    cross_validate, loss_and_gradient, random_search, stratified_folds, train_boosted, train_cart, train_forest,
    BoostParams, Dist, ForestParams, Hyper, ModelKind, SearchSpace, TreeNode,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Largest relative error between the analytic gradient and central
/// differences with h = 1e-5, measured against the gradient's max norm.
fn gradient_error(rng: &mut impl Rng) -> f64 {
    let n = rng.random_range(5..60);
    let d = rng.random_range(1..=18);
    let z: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
    let params: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let l2 = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(1e-4..1.0) };
    let (_, grad) = loss_and_gradient(&params, &z, &y, l2);
    let h = 1e-5;
    let numeric: Vec<f64> = (0..params.len())
        .map(|k| {
            let mut up = params.clone();
            let mut down = params.clone();
            up[k] += h;
            down[k] -= h;
            (loss_and_gradient(&up, &z, &y, l2).0 - loss_and_gradient(&down, &z, &y, l2).0) / (2.0 * h)
        })
        .collect();
    let scale = grad.iter().chain(&numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = grad.iter().zip(&numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    worst / scale
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let mut rng = copattern::util::rng(17);
    for case in 0..100 {
        let err = gradient_error(&mut rng);
        assert!(err <= 1e-6, "case {case}: relative error {err}");
    }
}

/// Features uniform on [-1, 1]; label = x0 > 0 with `noise` of labels flipped.
fn planted(seed: u64, n: usize, d: usize, noise: f64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = copattern::util::rng(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y = x
        .iter()
        .map(|r| {
            let clean = r[0] > 0.0;
            u8::from(clean != rng.random_bool(noise))
        })
        .collect();
    (x, y)
}

fn rows(x: &[Vec<f64>]) -> Vec<&[f64]> {
    x.iter().map(Vec::as_slice).collect()
}

#[test]
fn boosted_loss_never_rises_over_100_rounds() {
    for (seed, noise) in [(1, 0.05), (2, 0.3), (3, 0.5)] {
        let (x, y) = planted(seed, 400, 8, noise);
        for lr in [0.1, 0.5, 1.0] {
            let p = BoostParams {
                n_rounds: 100,
                learning_rate: lr,
                max_depth: 4,
                lambda_l2: 0.0,
            };
            let (_, history) = train_boosted(&rows(&x), &y, &p, 0).unwrap();
            assert_eq!(history.len(), 101);
            for (r, w) in history.windows(2).enumerate() {
                assert!(w[1] <= w[0], "seed {seed} lr {lr} round {r}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn cart_recovers_the_four_point_split() {
    let x = [[1.0], [2.0], [3.0], [4.0]];
    let xr: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
    let model = train_cart(&xr, &[0, 0, 1, 1], 5, 1).unwrap();
    match &model.trees[0] {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            assert_eq!((*feature, *threshold), (0, 2.5));
            assert!(matches!(**left, TreeNode::Leaf { value, .. } if value == 0.0));
            assert!(matches!(**right, TreeNode::Leaf { value, .. } if value == 1.0));
        }
        leaf => panic!("expected a split, got {leaf:?}"),
    }
}

#[test]
fn forest_recovers_a_planted_threshold() {
    let (x, y) = planted(4, 500, 18, 0.05);
    let p = ForestParams {
        n_trees: 100,
        max_depth: 8,
        min_leaf: 1,
        feature_frac: 0.5,
    };
    let model = train_forest(&rows(&x), &y, &p, 11).unwrap();
    let scores: Vec<f64> = x.iter().map(|r| model.raw_score(r)).collect();
    let auc = roc_auc(&y, &scores).unwrap();
    assert!(auc >= 0.95, "training AUC {auc}");
}

#[test]
fn search_over_depth_finds_the_signal() {
    let (x, y) = planted(6, 300, 6, 0.05);
    let space = SearchSpace {
        kind: ModelKind::Tree,
        params: vec![
            ("max_depth".into(), Dist::Int { lo: 1, hi: 8 }),
            ("min_leaf".into(), Dist::Fixed { value: 1.0 }),
        ],
    };
    let result = random_search(&rows(&x), &y, &space, 8, &CvConfig::default(), 3).unwrap();
    let auc = result.report.mean_of("auc").unwrap();
    assert!(auc >= 0.9, "best mean CV AUC {auc}");
    assert_eq!(result.trials.len(), 8);
    assert_eq!(result.report.per_fold.len(), 15);
}

#[test]
fn stratified_folds_split_a_balanced_set_evenly() {
    let y: Vec<u8> = (0..100).map(|i| u8::from(i % 2 == 0)).collect();
    let folds = stratified_folds(&y, 5, 9).unwrap();
    for f in 0..5 {
        let members: Vec<usize> = (0..100).filter(|&i| folds[i] == f).collect();
        let pos = members.iter().filter(|&&i| y[i] == 1).count();
        assert_eq!((pos, members.len() - pos), (10, 10));
    }
    assert_eq!(folds, stratified_folds(&y, 5, 9).unwrap());
}

#[test]
fn cross_validation_reports_fifteen_folds_per_metric() {
    let (x, y) = planted(7, 120, 4, 0.1);
    let hyper = Hyper::default_for(ModelKind::Tree);
    let report = cross_validate(&rows(&x), &y, &hyper, &CvConfig::default(), 1).unwrap();
    for metric in ["recall", "precision", "f1", "auc", "ap"] {
        assert_eq!(report.values(metric).unwrap().len(), 15);
    }
    let again = cross_validate(&rows(&x), &y, &hyper, &CvConfig::default(), 1).unwrap();
    assert_eq!(report.mean, again.mean);
}

fn check_covers(node: &TreeNode) -> bool {
    match node {
        TreeNode::Leaf { cover, .. } => *cover > 0.0,
        TreeNode::Split { cover, left, right, .. } => {
            *cover == left.cover() + right.cover() && check_covers(left) && check_covers(right)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forest_probabilities_stay_in_unit_interval(seed in any::<u64>(), noise in 0.0f64..0.5) {
        let (x, y) = planted(seed, 80, 5, noise);
        prop_assume!(y.contains(&0) && y.contains(&1));
        let p = ForestParams { n_trees: 10, max_depth: 5, min_leaf: 1, feature_frac: 0.6 };
        let model = train_forest(&rows(&x), &y, &p, seed).unwrap();
        for t in &model.trees {
            prop_assert!(check_covers(t));
        }
        let mut rng = copattern::util::rng(seed ^ 1);
        for _ in 0..20 {
            let row: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let proba = model.proba_from_raw(model.raw_score(&row));
            prop_assert!((0.0..=1.0).contains(&proba));
        }
    }

    #[test]
    fn boosted_covers_add_up_and_scores_stay_finite(seed in any::<u64>(), lambda in 0.0f64..5.0) {
        let (x, y) = planted(seed, 60, 4, 0.2);
        prop_assume!(y.contains(&0) && y.contains(&1));
        let p = BoostParams { n_rounds: 10, learning_rate: 0.3, max_depth: 3, lambda_l2: lambda };
        let (model, _) = train_boosted(&rows(&x), &y, &p, 0).unwrap();
        for t in &model.trees {
            prop_assert!(check_covers(t));
        }
        for r in &x {
            prop_assert!(model.raw_score(r).is_finite());
        }
    }

    #[test]
    fn cart_fits_any_shatterable_set(seed in any::<u64>()) {
        // distinct values on one feature: depth log2(n) always suffices
        let mut rng = copattern::util::rng(seed);
        let n = 16;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, rng.random_range(0.0..1.0)]).collect();
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        y[0] = 0;
        y[1] = 1;
        let model = train_cart(&rows(&x), &y, 16, 1).unwrap();
        for (r, &label) in x.iter().zip(&y) {
            prop_assert_eq!(model.raw_score(r), f64::from(label));
        }
    }
}
