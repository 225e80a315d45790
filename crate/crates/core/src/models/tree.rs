//! Binary decision trees and the greedy grower shared by CART, random
//! forests and Newton boosting.

use std::collections::BTreeSet;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tree node. Rows with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
        cover: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Leaf { cover, .. } | TreeNode::Split { cover, .. } => *cover,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn collect_features(&self, out: &mut BTreeSet<usize>) {
        if let TreeNode::Split {
            feature, left, right, ..
        } = self
        {
            out.insert(*feature);
            left.collect_features(out);
            right.collect_features(out);
        }
    }

    /// Cover-weighted mean of leaf values.
    pub fn expected_value(&self) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split {
                cover, left, right, ..
            } => (left.cover() * left.expected_value() + right.cover() * right.expected_value()) / cover,
        }
    }

    /// Checks positive covers, exact cover additivity and finite values.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        match self {
            TreeNode::Leaf { value, cover } => {
                if !(*cover > 0.0) {
                    return Err(Error::InvalidModel(format!("leaf cover {cover} is not positive")));
                }
                if !value.is_finite() {
                    return Err(Error::InvalidModel("non-finite leaf value".into()));
                }
                Ok(())
            }
            TreeNode::Split {
                feature,
                threshold,
                cover,
                left,
                right,
            } => {
                if *feature >= n_features {
                    return Err(Error::InvalidModel(format!(
                        "split on feature {feature} of {n_features}"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::InvalidModel("non-finite threshold".into()));
                }
                if !(*cover > 0.0) || *cover != left.cover() + right.cover() {
                    return Err(Error::InvalidModel(format!(
                        "split cover {cover} does not equal children {} + {}",
                        left.cover(),
                        right.cover()
                    )));
                }
                left.validate(n_features)?;
                right.validate(n_features)
            }
        }
    }

    fn scale_leaves(&mut self, factor: f64) {
        match self {
            TreeNode::Leaf { value, .. } => *value *= factor,
            TreeNode::Split { left, right, .. } => {
                left.scale_leaves(factor);
                right.scale_leaves(factor);
            }
        }
    }
}

pub(crate) fn scale_tree(tree: &mut TreeNode, factor: f64) {
    tree.scale_leaves(factor);
}

/// Gini impurity of a node with `pos` positives out of `n`.
pub fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Criterion {
    /// stats: (count, positives)
    Gini,
    /// stats: (count, sum of gradients, sum of hessians)
    Newton { lambda: f64 },
}

#[derive(Clone, Copy, Debug, Default)]
struct Stats {
    n: f64,
    a: f64,
    b: f64,
}

impl Stats {
    fn add(&mut self, a: f64, b: f64) {
        self.n += 1.0;
        self.a += a;
        self.b += b;
    }

    fn minus(&self, other: &Stats) -> Stats {
        Stats {
            n: self.n - other.n,
            a: self.a - other.a,
            b: self.b - other.b,
        }
    }
}

impl Criterion {
    fn leaf_value(&self, s: &Stats) -> f64 {
        match *self {
            Criterion::Gini => s.a / s.n,
            Criterion::Newton { lambda } => {
                let den = s.b + lambda;
                if den > 0.0 {
                    -s.a / den
                } else {
                    0.0
                }
            }
        }
    }

    /// Impurity decrease (Gini, count-weighted) or Newton loss reduction.
    fn gain(&self, parent: &Stats, left: &Stats, right: &Stats) -> f64 {
        match *self {
            Criterion::Gini => {
                parent.n * gini(parent.a, parent.n)
                    - left.n * gini(left.a, left.n)
                    - right.n * gini(right.a, right.n)
            }
            Criterion::Newton { lambda } => {
                let score = |s: &Stats| {
                    let den = s.b + lambda;
                    if den > 0.0 {
                        s.a * s.a / den
                    } else {
                        0.0
                    }
                };
                0.5 * (score(left) + score(right) - score(parent))
            }
        }
    }

    fn is_pure(&self, s: &Stats) -> bool {
        match self {
            Criterion::Gini => s.a == 0.0 || s.a == s.n,
            Criterion::Newton { .. } => false,
        }
    }

    fn accepts(&self, gain: f64) -> bool {
        match self {
            // zero-gain splits are allowed so XOR-like structure can be split
            Criterion::Gini => gain >= 0.0,
            Criterion::Newton { .. } => gain > 1e-12,
        }
    }
}

pub(crate) struct Grower<'a> {
    pub x: &'a [&'a [f64]],
    /// per-sample (a, b) statistics: (label, 0) for Gini, (g, h) for Newton
    pub stats: &'a [(f64, f64)],
    pub criterion: Criterion,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// candidate features drawn per split; `None` means all
    pub features_per_split: Option<usize>,
}

impl Grower<'_> {
    fn n_features(&self) -> usize {
        self.x.first().map_or(0, |r| r.len())
    }

    /// Grows a tree over `samples` (indices may repeat, as in a bootstrap).
    pub fn grow(&self, samples: Vec<usize>, rng: &mut ChaCha8Rng) -> TreeNode {
        self.grow_node(samples, 0, rng)
    }

    fn grow_node(&self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let mut total = Stats::default();
        for &i in &samples {
            total.add(self.stats[i].0, self.stats[i].1);
        }
        let leaf = TreeNode::Leaf {
            value: self.criterion.leaf_value(&total),
            cover: total.n,
        };
        if depth >= self.max_depth
            || self.criterion.is_pure(&total)
            || samples.len() < 2 * self.min_leaf.max(1)
        {
            return leaf;
        }
        let Some((feature, threshold)) = self.best_split(&samples, &total, rng) else {
            return leaf;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x[i][feature] <= threshold);
        TreeNode::Split {
            feature,
            threshold,
            cover: total.n,
            left: Box::new(self.grow_node(left, depth + 1, rng)),
            right: Box::new(self.grow_node(right, depth + 1, rng)),
        }
    }

    fn candidate_features(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let f = self.n_features();
        match self.features_per_split {
            Some(m) if m < f => {
                let mut chosen = index::sample(rng, f, m.max(1)).into_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..f).collect(),
        }
    }

    /// Exhaustive search over midpoints of adjacent distinct values. Ties go
    /// to the lowest feature index, then the lowest threshold.
    fn best_split(&self, samples: &[usize], total: &Stats, rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = samples.to_vec();
        for f in self.candidate_features(rng) {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = Stats::default();
            for k in 0..order.len() - 1 {
                let i = order[k];
                left.add(self.stats[i].0, self.stats[i].1);
                let (lo, hi) = (self.x[i][f], self.x[order[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let n_left = k + 1;
                if n_left < self.min_leaf || order.len() - n_left < self.min_leaf {
                    continue;
                }
                let right = total.minus(&left);
                let gain = self.criterion.gain(total, &left, &right);
                if !self.criterion.accepts(gain) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((g, _, _)) => gain > g + 1e-12 * g.abs().max(1.0),
                };
                if better {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((gain, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util;

    fn grow_gini(x: &[Vec<f64>], y: &[u8], max_depth: usize) -> TreeNode {
        let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let stats: Vec<(f64, f64)> = y.iter().map(|&l| (f64::from(l), 0.0)).collect();
        let grower = Grower {
            x: &rows,
            stats: &stats,
            criterion: Criterion::Gini,
            max_depth,
            min_leaf: 1,
            features_per_split: None,
        };
        grower.grow((0..y.len()).collect(), &mut util::rng(0))
    }

    #[test]
    fn gini_of_balanced_node() {
        assert_eq!(gini(2.0, 4.0), 0.5);
        assert_eq!(gini(0.0, 4.0), 0.0);
    }

    #[test]
    fn one_dimensional_split_at_midpoint() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| vec![v]).collect();
        let tree = grow_gini(&x, &[0, 0, 1, 1], 5);
        match &tree {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                cover,
            } => {
                assert_eq!((*feature, *threshold, *cover), (0, 2.5, 4.0));
                assert_eq!(**left, TreeNode::Leaf { value: 0.0, cover: 2.0 });
                assert_eq!(**right, TreeNode::Leaf { value: 1.0, cover: 2.0 });
            }
            other => panic!("expected a split, got {other:?}"),
        }
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let x = vec![vec![1.0], vec![2.0]];
        let tree = grow_gini(&x, &[1, 1], 5);
        assert_eq!(tree, TreeNode::Leaf { value: 1.0, cover: 2.0 });
        assert_eq!(tree.depth(), 0);
    }

    #[test]
    fn xor_is_split_despite_zero_first_gain() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = [0, 1, 1, 0];
        let tree = grow_gini(&x, &y, 2);
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!(tree.predict(row), f64::from(label));
        }
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // features 0 and 1 are identical
        let x = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![4.0, 4.0]];
        let tree = grow_gini(&x, &[0, 0, 1, 1], 1);
        assert!(matches!(tree, TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn validate_catches_cover_mismatch() {
        let bad = TreeNode::Split {
            feature: 0,
            threshold: 0.5,
            cover: 3.0,
            left: Box::new(TreeNode::Leaf { value: 0.0, cover: 1.0 }),
            right: Box::new(TreeNode::Leaf { value: 1.0, cover: 1.0 }),
        };
        assert!(bad.validate(1).is_err());
        let zero = TreeNode::Leaf { value: 0.0, cover: 0.0 };
        assert!(zero.validate(1).is_err());
    }

    #[test]
    fn expected_value_is_cover_weighted() {
        let t = TreeNode::Split {
            feature: 0,
            threshold: 0.5,
            cover: 4.0,
            left: Box::new(TreeNode::Leaf { value: 1.0, cover: 1.0 }),
            right: Box::new(TreeNode::Leaf { value: 3.0, cover: 3.0 }),
        };
        assert_eq!(t.expected_value(), 2.5);
    }
}
