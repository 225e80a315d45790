//! Classification metrics and per-(window, pattern, model) reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::models::Model;
use crate::util::fmt_sig;
use crate::windows::Pattern;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(Error::Empty("labels"));
    }
    Ok(())
}

/// Precision, recall and F1 of hard predictions. Each ratio is 0 when its
/// denominator is 0.
pub fn confusion_metrics(labels: &[u8], predictions: &[u8]) -> Result<Confusion> {
    check_lengths(labels.len(), predictions.len())?;
    let mut c = Confusion::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y == 1, p == 1) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.recall = ratio(c.tp, c.tp + c.fn_);
    c.f1 = if c.precision + c.recall == 0.0 {
        0.0
    } else {
        2.0 * c.precision * c.recall / (c.precision + c.recall)
    };
    Ok(c)
}

/// Mann-Whitney AUC: probability a random positive outscores a random
/// negative, ties counting one half. Computed from mid-ranks.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_lengths(labels.len(), scores.len())?;
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(Error::MissingClass(1));
    }
    if neg == 0 {
        return Err(Error::MissingClass(0));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // count (positive, negative) pairs won, in half-units to stay exact
    let mut half_wins: u128 = 0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        let group_neg = (j - i) - group_pos;
        half_wins += (group_pos as u128) * (2 * neg_below as u128 + group_neg as u128);
        neg_below += group_neg;
        i = j;
    }
    Ok(half_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Non-interpolated average precision: mean over positives of the precision
/// at each positive's rank. Equal scores keep their input order.
pub fn average_precision(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_lengths(labels.len(), scores.len())?;
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 {
        return Err(Error::MissingClass(1));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if labels[k] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Fraction of positive labels: the AP of a random ranking.
pub fn prevalence(labels: &[u8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    Ok(labels.iter().filter(|&&y| y == 1).count() as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub auc: f64,
    pub ap: f64,
    pub prevalence: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// All metrics of `scores` against `labels`, hard predictions at
/// `score >= threshold`.
pub fn score_metrics(labels: &[u8], scores: &[f64], threshold: f64) -> Result<Metrics> {
    let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s >= threshold)).collect();
    let c = confusion_metrics(labels, &preds)?;
    Ok(Metrics {
        threshold,
        recall: c.recall,
        precision: c.precision,
        f1: c.f1,
        auc: roc_auc(labels, scores)?,
        ap: average_precision(labels, scores)?,
        prevalence: prevalence(labels)?,
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
    })
}

pub fn evaluate(model: &Model, test: &FeatureMatrix, threshold: f64) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test matrix"));
    }
    let scores = test
        .rows
        .iter()
        .map(|r| model.predict_proba(&r.values))
        .collect::<Result<Vec<_>>>()?;
    score_metrics(&test.labels(), &scores, threshold)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub window: usize,
    pub pattern: Pattern,
    pub model: String,
    pub metrics: Metrics,
}

/// window, pattern, model, recall, precision, f1, auc, ap, prevalence
pub fn write_report_csv(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "window", "pattern", "model", "recall", "precision", "f1", "auc", "ap", "prevalence",
    ])?;
    for r in reports {
        let m = &r.metrics;
        w.write_record([
            r.window.to_string(),
            r.pattern.to_string(),
            r.model.clone(),
            fmt_sig(m.recall),
            fmt_sig(m.precision),
            fmt_sig(m.f1),
            fmt_sig(m.auc),
            fmt_sig(m.ap),
            fmt_sig(m.prevalence),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// AP per window for each model plus the prevalence baseline, for one
/// pattern. A final `mean` row holds per-column averages over the windows
/// where the column has a value.
pub fn write_plot_csv(reports: &[EvalReport], pattern: Pattern, path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<&EvalReport> = reports.iter().filter(|r| r.pattern == pattern).collect();
    let mut models: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    let mut by_window: BTreeMap<usize, (BTreeMap<&str, f64>, f64)> = BTreeMap::new();
    for r in &rows {
        let entry = by_window.entry(r.window).or_default();
        entry.0.insert(r.model.as_str(), r.metrics.ap);
        entry.1 = r.metrics.prevalence;
    }

    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["window".to_string()];
    header.extend(models.iter().map(|m| m.to_string()));
    header.push("baseline".into());
    w.write_record(&header)?;

    let mut sums = vec![(0.0, 0usize); models.len() + 1];
    for (window, (aps, baseline)) in &by_window {
        let mut rec = vec![window.to_string()];
        for (col, m) in models.iter().enumerate() {
            match aps.get(m) {
                Some(&ap) => {
                    sums[col].0 += ap;
                    sums[col].1 += 1;
                    rec.push(fmt_sig(ap));
                }
                None => rec.push(String::new()),
            }
        }
        sums[models.len()].0 += baseline;
        sums[models.len()].1 += 1;
        rec.push(fmt_sig(*baseline));
        w.write_record(&rec)?;
    }
    let mut rec = vec!["mean".to_string()];
    rec.extend(sums.iter().map(|&(s, n)| {
        if n == 0 {
            String::new()
        } else {
            fmt_sig(s / n as f64)
        }
    }));
    w.write_record(&rec)?;
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}
