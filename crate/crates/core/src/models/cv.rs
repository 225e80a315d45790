//! Repeated stratified k-fold cross-validation and random hyperparameter search.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Hyper, ModelKind};
use crate::error::{Error, Result};
use crate::eval::{score_metrics, Metrics};
use crate::util;

/// Metric names summarized across folds.
pub const CV_METRICS: [&str; 5] = ["recall", "precision", "f1", "auc", "ap"];

fn metric_values(m: &Metrics) -> [f64; 5] {
    [m.recall, m.precision, m.f1, m.auc, m.ap]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub hyper: Hyper,
    pub folds: usize,
    pub repeats: usize,
    pub per_fold: Vec<FoldResult>,
    /// Mean and sample standard deviation per entry of [`CV_METRICS`].
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CvReport {
    pub fn values(&self, metric: &str) -> Option<Vec<f64>> {
        let j = CV_METRICS.iter().position(|&m| m == metric)?;
        Some(self.per_fold.iter().map(|f| metric_values(&f.metrics)[j]).collect())
    }

    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        CV_METRICS.iter().position(|&m| m == metric).map(|j| self.mean[j])
    }
}

/// Fold id per sample. Positives and negatives are shuffled separately and
/// dealt round-robin, so every fold gets ⌊n_c/k⌋ or ⌈n_c/k⌉ of each class.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = util::rng(seed);
    let mut assignment = vec![0; y.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::ClassTooSmall {
                class,
                count: idx.len(),
                needed: folds,
            });
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Ok(assignment)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub threshold: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            repeats: 3,
            threshold: 0.5,
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn cross_validate(x: &[&[f64]], y: &[u8], hyper: &Hyper, cfg: &CvConfig, seed: u64) -> Result<CvReport> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let assignments = (0..cfg.repeats)
        .map(|r| stratified_folds(y, cfg.folds, util::derive_path(seed, &[util::tag("folds"), r as u64])))
        .collect::<Result<Vec<_>>>()?;
    let units: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.folds).map(move |f| (r, f)))
        .collect();
    let per_fold = units
        .par_iter()
        .map(|&(repeat, fold)| {
            let a = &assignments[repeat];
            let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..y.len() {
                if a[i] == fold {
                    vx.push(x[i]);
                    vy.push(y[i]);
                } else {
                    tx.push(x[i]);
                    ty.push(y[i]);
                }
            }
            let unit_seed = util::derive_path(seed, &[util::tag("fit"), repeat as u64, fold as u64]);
            let model = train(hyper, &tx, &ty, unit_seed)?;
            let scores = vx.iter().map(|r| model.predict_proba(r)).collect::<Result<Vec<_>>>()?;
            Ok(FoldResult {
                repeat,
                fold,
                metrics: score_metrics(&vy, &scores, cfg.threshold)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = Vec::with_capacity(CV_METRICS.len());
    let mut std = Vec::with_capacity(CV_METRICS.len());
    for j in 0..CV_METRICS.len() {
        let v: Vec<f64> = per_fold.iter().map(|f| metric_values(&f.metrics)[j]).collect();
        let (m, s) = mean_std(&v);
        mean.push(m);
        std.push(s);
    }
    Ok(CvReport {
        hyper: hyper.clone(),
        folds: cfg.folds,
        repeats: cfg.repeats,
        per_fold,
        mean,
        std,
    })
}

/// Distribution of one hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Dist {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// Inclusive on both ends.
    Int { lo: i64, hi: i64 },
}

impl Dist {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dist::Fixed { value } => value.is_finite(),
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Dist::LogUniform { lo, hi } => lo > 0.0 && hi.is_finite() && lo <= hi,
            Dist::Int { lo, hi } => lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid distribution {self:?}")))
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Uniform { lo, hi } if lo == hi => lo,
            Dist::Uniform { lo, hi } => rng.random_range(lo..hi),
            Dist::LogUniform { lo, hi } if lo == hi => lo,
            Dist::LogUniform { lo, hi } => rng.random_range(lo.ln()..hi.ln()).exp(),
            Dist::Int { lo, hi } => rng.random_range(lo..=hi) as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub kind: ModelKind,
    pub params: Vec<(String, Dist)>,
}

impl SearchSpace {
    pub fn default_for(kind: ModelKind) -> SearchSpace {
        let int = |lo, hi| Dist::Int { lo, hi };
        let log = |lo, hi| Dist::LogUniform { lo, hi };
        let params: Vec<(&str, Dist)> = match kind {
            ModelKind::Logistic => vec![("l2", log(1e-4, 10.0))],
            ModelKind::Tree => vec![("max_depth", int(2, 10))],
            ModelKind::Forest => vec![
                ("n_trees", int(50, 300)),
                ("max_depth", int(3, 12)),
                ("feature_frac", Dist::Uniform { lo: 0.3, hi: 1.0 }),
            ],
            ModelKind::Boosted => vec![
                ("n_rounds", int(50, 300)),
                ("learning_rate", log(0.01, 0.3)),
                ("max_depth", int(2, 6)),
                ("lambda_l2", log(0.1, 10.0)),
            ],
        };
        SearchSpace {
            kind,
            params: params.into_iter().map(|(n, d)| (n.to_string(), d)).collect(),
        }
    }

    /// Checks every distribution and that each name is a hyperparameter of the kind.
    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::Config(format!("empty search space for {}", self.kind)));
        }
        let mut probe = Hyper::default_for(self.kind);
        for (name, dist) in &self.params {
            dist.validate()?;
            probe.set(name, 1.0)?;
        }
        Ok(())
    }

    /// Draws one configuration; unnamed hyperparameters keep their defaults.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<Hyper> {
        let mut h = Hyper::default_for(self.kind);
        for (name, dist) in &self.params {
            h.set(name, dist.sample(rng))?;
        }
        Ok(h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Hyper,
    pub best_trial: usize,
    pub report: CvReport,
    /// (configuration, mean CV average precision) per trial, in draw order.
    pub trials: Vec<(Hyper, f64)>,
}

/// Draws `n_trials` configurations up front, cross-validates each with the
/// same fold assignment, and keeps the highest mean AP (earliest on ties).
pub fn random_search(
    x: &[&[f64]],
    y: &[u8],
    space: &SearchSpace,
    n_trials: usize,
    cfg: &CvConfig,
    seed: u64,
) -> Result<SearchResult> {
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::Config("random search needs at least one trial".into()));
    }
    let mut rng = util::rng(util::derive_seed(seed, util::tag("draws")));
    let draws = (0..n_trials).map(|_| space.sample(&mut rng)).collect::<Result<Vec<_>>>()?;
    let cv_seed = util::derive_seed(seed, util::tag("cv"));
    let mut best: Option<(usize, CvReport)> = None;
    let mut trials = Vec::with_capacity(n_trials);
    for (t, hyper) in draws.into_iter().enumerate() {
        let report = cross_validate(x, y, &hyper, cfg, cv_seed)?;
        let ap = report.mean_of("ap").unwrap_or(f64::NAN);
        log::debug!("trial {t} {} mean ap {ap:.4}", hyper.kind());
        trials.push((hyper, ap));
        let better = match &best {
            None => true,
            Some((_, r)) => ap > r.mean_of("ap").unwrap_or(f64::NAN),
        };
        if better {
            best = Some((t, report));
        }
    }
    let (best_trial, report) = best.expect("at least one trial");
    Ok(SearchResult {
        best: report.hyper.clone(),
        best_trial,
        report,
        trials,
    })
}
