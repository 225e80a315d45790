//! SHAP attributions on the raw-score (log-odds or mean-leaf) scale: exact
//! linear SHAP, path-dependent TreeSHAP, an exhaustive Shapley oracle that
//! shares TreeSHAP's value function, and importance summaries.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::models::{LinearModel, Model, TreeEnsemble, TreeNode};
use crate::util::fmt_sig;

/// Attribution of one row: `base + Σ phi` equals the model's raw score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapRow {
    pub author_a: String,
    pub author_b: String,
    pub phi: Vec<f64>,
    pub base: f64,
}

impl ShapRow {
    pub fn total(&self) -> f64 {
        self.base + self.phi.iter().sum::<f64>()
    }
}

fn check_arity(expected: usize, m: &FeatureMatrix) -> Result<()> {
    if m.n_features() != expected {
        return Err(Error::Arity {
            expected,
            actual: m.n_features(),
        });
    }
    Ok(())
}

/// Column means of the background set.
pub fn background_means(background: &FeatureMatrix) -> Result<Vec<f64>> {
    if background.is_empty() {
        return Err(Error::Empty("background matrix"));
    }
    let n = background.len() as f64;
    Ok((0..background.n_features())
        .map(|j| background.rows.iter().map(|r| r.values[j]).sum::<f64>() / n)
        .collect())
}

/// `phi_i = w_i (x_i - mean_i) / sd_i`, base = margin at the background means.
pub fn linear_shap_row(model: &LinearModel, means: &[f64], row: &[f64]) -> (f64, Vec<f64>) {
    let base = model.raw_score(means);
    let phi = row
        .iter()
        .zip(means)
        .zip(model.weights.iter().zip(&model.standardization))
        .map(|((x, m), (w, (_, sd)))| w * (x - m) / sd)
        .collect();
    (base, phi)
}

pub fn linear_shap(model: &LinearModel, rows: &FeatureMatrix, background: &FeatureMatrix) -> Result<Vec<ShapRow>> {
    check_arity(model.n_features(), rows)?;
    check_arity(model.n_features(), background)?;
    let means = background_means(background)?;
    Ok(rows
        .rows
        .iter()
        .map(|r| {
            let (base, phi) = linear_shap_row(model, &means, &r.values);
            ShapRow {
                author_a: r.author_a.clone(),
                author_b: r.author_b.clone(),
                phi,
                base,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let d = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if d == 0 { 1.0 } else { 0.0 },
    });
    let df = d as f64;
    for i in (0..d).rev() {
        let w = path[i].pweight;
        path[i + 1].pweight += one_fraction * w * (i as f64 + 1.0) / (df + 1.0);
        path[i].pweight = zero_fraction * w * (df - i as f64) / (df + 1.0);
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let d = path.len() - 1;
    let df = d as f64;
    let (one, zero) = (path[index].one_fraction, path[index].zero_fraction);
    let mut next_one = path[d].pweight;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * (df + 1.0) / ((i as f64 + 1.0) * one);
            next_one = tmp - path[i].pweight * zero * (df - i as f64) / (df + 1.0);
        } else {
            path[i].pweight = path[i].pweight * (df + 1.0) / (zero * (df - i as f64));
        }
    }
    for i in index..d {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_path_sum(path: &[PathElement], index: usize) -> f64 {
    let d = path.len() - 1;
    let df = d as f64;
    let (one, zero) = (path[index].one_fraction, path[index].zero_fraction);
    let mut next_one = path[d].pweight;
    let mut total = 0.0;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = next_one * (df + 1.0) / ((i as f64 + 1.0) * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * (df - i as f64) / (df + 1.0);
        } else {
            total += path[i].pweight / zero / ((df - i as f64) / (df + 1.0));
        }
    }
    total
}

fn recurse(
    node: &TreeNode,
    row: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    extend_path(&mut path, zero_fraction, one_fraction, feature);
    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = path[i];
                if let Some(f) = el.feature {
                    phi[f] += w * (el.one_fraction - el.zero_fraction) * value;
                }
            }
        }
        TreeNode::Split {
            feature: split,
            threshold,
            cover,
            left,
            right,
        } => {
            let (hot, cold) = if row[*split] <= *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*split)) {
                in_zero = path[k].zero_fraction;
                in_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            recurse(
                hot,
                row,
                phi,
                path.clone(),
                hot.cover() / cover * in_zero,
                in_one,
                Some(*split),
            );
            recurse(cold, row, phi, path, cold.cover() / cover * in_zero, 0.0, Some(*split));
        }
    }
}

/// Path-dependent TreeSHAP for one tree on its own output scale.
pub fn tree_shap_single(tree: &TreeNode, row: &[f64], phi: &mut [f64]) {
    recurse(tree, row, phi, Vec::new(), 1.0, 1.0, None);
}

/// Ensemble attribution for one row, scaled to the raw score.
pub fn tree_shap_row(model: &TreeEnsemble, row: &[f64]) -> (f64, Vec<f64>) {
    let (offset, scale) = model.tree_scale();
    let mut phi = vec![0.0; model.n_features];
    let mut tree_phi = vec![0.0; model.n_features];
    let mut expected = 0.0;
    for tree in &model.trees {
        tree_phi.iter_mut().for_each(|p| *p = 0.0);
        tree_shap_single(tree, row, &mut tree_phi);
        for (p, t) in phi.iter_mut().zip(&tree_phi) {
            *p += t;
        }
        expected += tree.expected_value();
    }
    for p in &mut phi {
        *p *= scale;
    }
    (offset + scale * expected, phi)
}

pub fn tree_shap(model: &TreeEnsemble, rows: &FeatureMatrix) -> Result<Vec<ShapRow>> {
    model.validate()?;
    check_arity(model.n_features, rows)?;
    Ok(rows
        .rows
        .par_iter()
        .map(|r| {
            let (base, phi) = tree_shap_row(model, &r.values);
            ShapRow {
                author_a: r.author_a.clone(),
                author_b: r.author_b.clone(),
                phi,
                base,
            }
        })
        .collect())
}

/// Dispatches on the model family. Linear models need a background set.
pub fn explain(model: &Model, rows: &FeatureMatrix, background: &FeatureMatrix) -> Result<Vec<ShapRow>> {
    if rows.is_empty() {
        return Err(Error::Empty("rows to explain"));
    }
    match model {
        Model::Linear(m) => linear_shap(m, rows, background),
        Model::Ensemble(m) => tree_shap(m, rows),
    }
}

/// Conditional expectation of a tree given the features in `known`; unknown
/// splits descend both branches weighted by cover.
fn tree_value(node: &TreeNode, row: &[f64], known: &dyn Fn(usize) -> bool) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature,
            threshold,
            cover,
            left,
            right,
        } => {
            if known(*feature) {
                let next = if row[*feature] <= *threshold { left } else { right };
                tree_value(next, row, known)
            } else {
                (left.cover() * tree_value(left, row, known) + right.cover() * tree_value(right, row, known)) / cover
            }
        }
    }
}

/// Exact Shapley values over every subset of the features the ensemble
/// splits on. Unused features get 0.
pub fn shapley_oracle(model: &TreeEnsemble, row: &[f64], max_features: usize) -> Result<(f64, Vec<f64>)> {
    let mut used = BTreeSet::new();
    for t in &model.trees {
        t.collect_features(&mut used);
    }
    let limit = max_features.min(12);
    if used.len() > limit {
        return Err(Error::TooManyFeatures {
            used: used.len(),
            limit,
        });
    }
    let players: Vec<usize> = used.into_iter().collect();
    let m = players.len();
    let (offset, scale) = model.tree_scale();
    let value = |mask: usize| {
        let known = |f: usize| players.iter().position(|&p| p == f).is_some_and(|k| mask >> k & 1 == 1);
        offset + scale * model.trees.iter().map(|t| tree_value(t, row, &known)).sum::<f64>()
    };
    let v: Vec<f64> = (0..1usize << m).map(value).collect();
    let mut fact = vec![1.0f64; m + 1];
    for i in 1..=m {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; model.n_features];
    for (k, &f) in players.iter().enumerate() {
        let mut total = 0.0;
        for mask in 0..1usize << m {
            if mask >> k & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = fact[s] * fact[m - s - 1] / fact[m];
            total += weight * (v[mask | 1 << k] - v[mask]);
        }
        phi[f] = total;
    }
    Ok((v[0], phi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapEntry {
    pub feature: String,
    pub importance: f64,
    /// Sign of the Pearson correlation between feature value and phi.
    pub direction: i8,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub entries: Vec<ShapEntry>,
}

impl ShapSummary {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.rank)
    }
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Sign of the Pearson correlation; 0 if either side is constant. Pairs are
/// sorted first so the result does not depend on row order.
pub fn correlation_sign(xs: &[f64], ys: &[f64]) -> i8 {
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 || sxy == 0.0 {
        return 0;
    }
    if sxy > 0.0 {
        1
    } else {
        -1
    }
}

/// Importance = mean |phi|; sorted descending, ties by feature name.
pub fn summarize(rows: &[ShapRow], matrix: &FeatureMatrix) -> Result<ShapSummary> {
    if rows.len() < 2 {
        return Err(Error::Empty("at least two SHAP rows"));
    }
    if rows.len() != matrix.len() {
        return Err(Error::LengthMismatch(rows.len(), matrix.len()));
    }
    let n = rows.len() as f64;
    let mut entries: Vec<ShapEntry> = matrix
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let phis: Vec<f64> = rows.iter().map(|r| r.phi[j]).collect();
            let importance = sorted_sum(phis.iter().map(|p| p.abs()).collect()) / n;
            ShapEntry {
                feature: name.clone(),
                importance,
                direction: correlation_sign(&matrix.column(j), &phis),
                rank: 0,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.importance
            .partial_cmp(&a.importance)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(ShapSummary { entries })
}

/// Header: author_a, author_b, one phi column per feature, base.
pub fn write_shap_csv(rows: &[ShapRow], feature_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["author_a".to_string(), "author_b".to_string()];
    header.extend(feature_names.iter().cloned());
    header.push("base".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.author_a.clone(), r.author_b.clone()];
        rec.extend(r.phi.iter().map(|&v| fmt_sig(v)));
        rec.push(fmt_sig(r.base));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_csv(summary: &ShapSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "importance", "direction", "rank"])?;
    for e in &summary.entries {
        w.write_record([
            e.feature.clone(),
            fmt_sig(e.importance),
            e.direction.to_string(),
            e.rank.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
