//! Single trees, random forests and Newton-boosted trees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::require_both_classes;
use super::tree::{scale_tree, Criterion, Grower, TreeNode};
use crate::error::{Error, Result};
use crate::util::{self, sigmoid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Single,
    Forest,
    Boosted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
    pub learning_rate: f64,
    pub base_score: f64,
}

impl TreeEnsemble {
    /// Mean leaf value for single trees and forests; log-odds for boosting.
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::Single | EnsembleKind::Forest => {
                self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
            }
            EnsembleKind::Boosted => {
                self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
            }
        }
    }

    pub fn proba_from_raw(&self, raw: f64) -> f64 {
        match self.kind {
            EnsembleKind::Single | EnsembleKind::Forest => raw.clamp(0.0, 1.0),
            EnsembleKind::Boosted => sigmoid(raw),
        }
    }

    /// How a single tree's output maps onto the raw score: `raw = offset + scale * Σ tree`.
    pub fn tree_scale(&self) -> (f64, f64) {
        match self.kind {
            EnsembleKind::Single | EnsembleKind::Forest => (0.0, 1.0 / self.trees.len() as f64),
            EnsembleKind::Boosted => (self.base_score, self.learning_rate),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::InvalidModel("ensemble without trees".into()));
        }
        if self.kind == EnsembleKind::Single && self.trees.len() != 1 {
            return Err(Error::InvalidModel("single-tree model holds several trees".into()));
        }
        if !self.learning_rate.is_finite() || !self.base_score.is_finite() {
            return Err(Error::InvalidModel("non-finite ensemble parameters".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(self.n_features))
    }
}

fn check_shape(x: &[&[f64]], y: &[u8]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::Empty("training matrix"));
    }
    Ok(x[0].len())
}

fn gini_stats(y: &[u8]) -> Vec<(f64, f64)> {
    y.iter().map(|&l| (f64::from(l), 0.0)).collect()
}

pub fn train_cart(x: &[&[f64]], y: &[u8], max_depth: usize, min_leaf: usize) -> Result<TreeEnsemble> {
    let n_features = check_shape(x, y)?;
    let stats = gini_stats(y);
    let grower = Grower {
        x,
        stats: &stats,
        criterion: Criterion::Gini,
        max_depth,
        min_leaf,
        features_per_split: None,
    };
    // the generator is never consulted without feature subsampling
    let tree = grower.grow((0..x.len()).collect(), &mut util::rng(0));
    Ok(TreeEnsemble {
        kind: EnsembleKind::Single,
        n_features,
        trees: vec![tree],
        learning_rate: 1.0,
        base_score: 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_frac: f64,
}

pub fn train_forest(x: &[&[f64]], y: &[u8], p: &ForestParams, seed: u64) -> Result<TreeEnsemble> {
    train_forest_with(x, y, p, seed, true)
}

/// `bootstrap = false` trains every tree on the full sample; used to check
/// the forest reduces to a single tree.
pub fn train_forest_with(
    x: &[&[f64]],
    y: &[u8],
    p: &ForestParams,
    seed: u64,
    bootstrap: bool,
) -> Result<TreeEnsemble> {
    let n_features = check_shape(x, y)?;
    if p.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    if !(p.feature_frac > 0.0 && p.feature_frac <= 1.0) {
        return Err(Error::Config(format!("feature_frac {} outside (0, 1]", p.feature_frac)));
    }
    let per_split = ((p.feature_frac * n_features as f64).ceil() as usize).clamp(1, n_features.max(1));
    let stats = gini_stats(y);
    let n = x.len();
    let trees: Vec<TreeNode> = (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = util::rng(util::derive_seed(seed, t as u64));
            let samples: Vec<usize> = if bootstrap {
                use rand::Rng;
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let grower = Grower {
                x,
                stats: &stats,
                criterion: Criterion::Gini,
                max_depth: p.max_depth,
                min_leaf: p.min_leaf,
                features_per_split: Some(per_split),
            };
            grower.grow(samples, &mut rng)
        })
        .collect();
    Ok(TreeEnsemble {
        kind: EnsembleKind::Forest,
        n_features,
        trees,
        learning_rate: 1.0,
        base_score: 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda_l2: f64,
}

pub fn log_loss(y: &[u8], raw: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(raw)
        .map(|(&l, &s)| s.max(0.0) + (-s.abs()).exp().ln_1p() - f64::from(l) * s)
        .sum();
    total / y.len() as f64
}

/// Newton boosting on the logistic loss. Returns the model and the training
/// log-loss after each round (index 0 is the base score alone).
///
/// A round whose step would raise the training loss has its leaves halved
/// until it does not, and is zeroed if halving never helps.
pub fn train_boosted(x: &[&[f64]], y: &[u8], p: &BoostParams, _seed: u64) -> Result<(TreeEnsemble, Vec<f64>)> {
    let n_features = check_shape(x, y)?;
    require_both_classes(y)?;
    if p.n_rounds == 0 {
        return Err(Error::Config("boosting needs at least one round".into()));
    }
    if !(p.learning_rate > 0.0) || !(p.lambda_l2 >= 0.0) {
        return Err(Error::Config("invalid boosting hyperparameters".into()));
    }
    let prev = y.iter().filter(|&&l| l == 1).count() as f64 / y.len() as f64;
    let base_score = (prev / (1.0 - prev)).ln();
    let mut raw = vec![base_score; x.len()];
    let mut loss = log_loss(y, &raw);
    let mut history = vec![loss];
    let mut trees = Vec::with_capacity(p.n_rounds);
    let samples: Vec<usize> = (0..x.len()).collect();
    for _ in 0..p.n_rounds {
        let stats: Vec<(f64, f64)> = y
            .iter()
            .zip(&raw)
            .map(|(&l, &s)| {
                let q = sigmoid(s);
                (q - f64::from(l), q * (1.0 - q))
            })
            .collect();
        let grower = Grower {
            x,
            stats: &stats,
            criterion: Criterion::Newton { lambda: p.lambda_l2 },
            max_depth: p.max_depth,
            min_leaf: 1,
            features_per_split: None,
        };
        let mut tree = grower.grow(samples.clone(), &mut util::rng(0));
        let mut step: Vec<f64> = x.iter().map(|r| p.learning_rate * tree.predict(r)).collect();
        let mut next: Vec<f64> = raw.iter().zip(&step).map(|(a, b)| a + b).collect();
        let mut next_loss = log_loss(y, &next);
        let mut halvings = 0;
        while next_loss > loss {
            if halvings == 40 {
                scale_tree(&mut tree, 0.0);
                next = raw.clone();
                next_loss = loss;
                break;
            }
            scale_tree(&mut tree, 0.5);
            for s in &mut step {
                *s *= 0.5;
            }
            next = raw.iter().zip(&step).map(|(a, b)| a + b).collect();
            next_loss = log_loss(y, &next);
            halvings += 1;
        }
        raw = next;
        loss = next_loss;
        history.push(loss);
        trees.push(tree);
    }
    Ok((
        TreeEnsemble {
            kind: EnsembleKind::Boosted,
            n_features,
            trees,
            learning_rate: p.learning_rate,
            base_score,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn depth_zero_balanced_round_has_zero_leaf() {
        let data = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let p = BoostParams {
            n_rounds: 1,
            learning_rate: 1.0,
            max_depth: 0,
            lambda_l2: 0.0,
        };
        let (m, _) = train_boosted(&rows(&data), &[1, 0, 1, 0], &p, 0).unwrap();
        assert_eq!(m.base_score, 0.0);
        assert_eq!(m.trees[0], TreeNode::Leaf { value: 0.0, cover: 4.0 });
    }

    #[test]
    fn two_sample_newton_step() {
        let data = vec![vec![1.0], vec![0.0]];
        let p = BoostParams {
            n_rounds: 1,
            learning_rate: 1.0,
            max_depth: 1,
            lambda_l2: 0.0,
        };
        let (m, _) = train_boosted(&rows(&data), &[1, 0], &p, 0).unwrap();
        assert_eq!(m.raw_score(&[1.0]), 2.0);
        assert_eq!(m.raw_score(&[0.0]), -2.0);
        assert!((m.proba_from_raw(m.raw_score(&[1.0])) - 0.8808).abs() < 1e-4);
        assert!((m.proba_from_raw(m.raw_score(&[0.0])) - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn identical_stumps_forest_predicts_stump_value() {
        let stump = TreeNode::Split {
            feature: 0,
            threshold: 0.5,
            cover: 2.0,
            left: Box::new(TreeNode::Leaf { value: 0.25, cover: 1.0 }),
            right: Box::new(TreeNode::Leaf { value: 0.75, cover: 1.0 }),
        };
        let f = TreeEnsemble {
            kind: EnsembleKind::Forest,
            n_features: 1,
            trees: vec![stump; 7],
            learning_rate: 1.0,
            base_score: 0.0,
        };
        assert_eq!(f.raw_score(&[0.0]), 0.25);
        assert_eq!(f.raw_score(&[1.0]), 0.75);
    }

    #[test]
    fn unbagged_single_tree_forest_matches_cart() {
        let data: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64, (i % 5) as f64]).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from((i * 7 % 11) + (i % 5) > 7)).collect();
        let cart = train_cart(&rows(&data), &y, 4, 1).unwrap();
        let p = ForestParams {
            n_trees: 1,
            max_depth: 4,
            min_leaf: 1,
            feature_frac: 1.0,
        };
        let forest = train_forest_with(&rows(&data), &y, &p, 9, false).unwrap();
        assert_eq!(cart.trees, forest.trees);
    }

    #[test]
    fn forest_is_deterministic() {
        let data: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64, (i % 7) as f64]).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0 || i > 30)).collect();
        let p = ForestParams {
            n_trees: 10,
            max_depth: 5,
            min_leaf: 1,
            feature_frac: 0.5,
        };
        let a = train_forest(&rows(&data), &y, &p, 4).unwrap();
        let b = train_forest(&rows(&data), &y, &p, 4).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }
}
