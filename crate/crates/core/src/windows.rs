//! Overlapping input/prediction windows and the three labeled pair sets
//! built per window.
//!
//! The prediction-window graph exists only inside [`label_window`]; nothing
//! it returns besides labels depends on prediction-window publications.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::corpus::{PublicationSource, YearRange};
use crate::error::{Error, Result};
use crate::graph::{build_graph_restricted, CoauthorGraph};
use crate::util;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    New,
    Persistent,
    Discontinued,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::New, Pattern::Persistent, Pattern::Discontinued];

    pub fn as_str(&self) -> &'static str {
        match self {
            Pattern::New => "new",
            Pattern::Persistent => "persistent",
            Pattern::Discontinued => "discontinued",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "new" => Ok(Pattern::New),
            "persistent" => Ok(Pattern::Persistent),
            "discontinued" => Ok(Pattern::Discontinued),
            other => Err(Error::Config(format!("unknown pattern {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    pub index: usize,
    pub input_range: YearRange,
    pub prediction_range: YearRange,
}

/// Consecutive windows starting at `span.start`, advancing by `stride`,
/// until the prediction range would pass `span.end`.
pub fn enumerate_windows(
    span: YearRange,
    input_len: i32,
    pred_len: i32,
    stride: i32,
) -> Result<Vec<WindowSpec>> {
    if input_len < 1 || pred_len < 1 || stride < 1 {
        return Err(Error::Config(format!(
            "window lengths and stride must be positive (input {input_len}, prediction {pred_len}, stride {stride})"
        )));
    }
    let needed = input_len + pred_len;
    if span.len() < needed {
        return Err(Error::SpanTooShort {
            years: span.len(),
            needed,
        });
    }
    let mut out = Vec::new();
    let mut start = span.start;
    while start + needed - 1 <= span.end {
        out.push(WindowSpec {
            index: out.len(),
            input_range: YearRange {
                start,
                end: start + input_len - 1,
            },
            prediction_range: YearRange {
                start: start + input_len,
                end: start + needed - 1,
            },
        });
        start += stride;
    }
    Ok(out)
}

/// Authors with at least one publication in each of the two ranges.
pub fn active_authors<S: PublicationSource + ?Sized>(source: &S, w: &WindowSpec) -> BTreeSet<String> {
    let authors_in = |range: YearRange| -> BTreeSet<String> {
        source
            .publications_in(range)
            .into_iter()
            .flat_map(|r| r.author_ids.iter().cloned())
            .collect()
    };
    let input = authors_in(w.input_range);
    let pred = authors_in(w.prediction_range);
    input.intersection(&pred).cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub author_a: String,
    pub author_b: String,
    pub label: u8,
}

/// Counts recorded as a pair set moves through filtering, splitting and
/// undersampling.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub active_authors: usize,
    /// Unordered active pairs matching the pattern's edge condition.
    pub candidates_before_filter: usize,
    /// After the connecting-path filter (NEW only; equal otherwise).
    pub candidates_after_filter: usize,
    pub positives: usize,
    pub negatives: usize,
    pub undersampled: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPairSet {
    pub window: WindowSpec,
    pub pattern: Pattern,
    pub pairs: Vec<LabeledPair>,
    pub provenance: Provenance,
}

impl LabeledPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.pairs.iter().filter(|p| p.label == 1).count();
        (self.pairs.len() - pos, pos)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    fn with_pairs(&self, mut pairs: Vec<LabeledPair>) -> Self {
        pairs.sort();
        let mut out = LabeledPairSet {
            window: self.window,
            pattern: self.pattern,
            pairs,
            provenance: self.provenance.clone(),
        };
        let (neg, pos) = out.class_counts();
        out.provenance.positives = pos;
        out.provenance.negatives = neg;
        out
    }
}

fn finish(
    window: WindowSpec,
    pattern: Pattern,
    mut pairs: Vec<LabeledPair>,
    mut provenance: Provenance,
) -> LabeledPairSet {
    pairs.sort();
    provenance.positives = pairs.iter().filter(|p| p.label == 1).count();
    provenance.negatives = pairs.len() - provenance.positives;
    LabeledPairSet {
        window,
        pattern,
        pairs,
        provenance,
    }
}

fn pred_edge(g_pred: &CoauthorGraph, a: &str, b: &str) -> u8 {
    match (g_pred.index_of(a), g_pred.index_of(b)) {
        (Ok(i), Ok(j)) => u8::from(g_pred.weight_between(i, j).is_some()),
        _ => 0,
    }
}

/// NEW pattern: active pairs without an input edge that are joined by some
/// input-window path; label 1 iff they co-author in the prediction window.
pub fn label_new(
    window: WindowSpec,
    g_in: &CoauthorGraph,
    g_pred: &CoauthorGraph,
    actives: &BTreeSet<String>,
) -> LabeledPairSet {
    let members: Vec<usize> = (0..g_in.node_count())
        .filter(|&i| actives.contains(g_in.name(i)))
        .collect();
    let comp = g_in.components();
    let n = members.len();
    let adjacent_pairs = members
        .iter()
        .map(|&i| {
            g_in.neighbors(i)
                .iter()
                .filter(|&&(j, _)| i < j && actives.contains(g_in.name(j)))
                .count()
        })
        .sum::<usize>();
    let unconnected_total = n * n.saturating_sub(1) / 2 - adjacent_pairs;

    let mut pairs = Vec::new();
    for (pos, &i) in members.iter().enumerate() {
        for &j in &members[pos + 1..] {
            if comp[i] != comp[j] || g_in.weight_between(i, j).is_some() {
                continue;
            }
            let (a, b) = (g_in.name(i), g_in.name(j));
            pairs.push(LabeledPair {
                author_a: a.to_string(),
                author_b: b.to_string(),
                label: pred_edge(g_pred, a, b),
            });
        }
    }
    let provenance = Provenance {
        active_authors: actives.len(),
        candidates_before_filter: unconnected_total,
        candidates_after_filter: pairs.len(),
        ..Provenance::default()
    };
    finish(window, Pattern::New, pairs, provenance)
}

/// PERSISTENT pattern: active pairs with an input edge; label 1 iff the edge
/// recurs in the prediction window.
pub fn label_persistent(
    window: WindowSpec,
    g_in: &CoauthorGraph,
    g_pred: &CoauthorGraph,
    actives: &BTreeSet<String>,
) -> LabeledPairSet {
    let pairs: Vec<LabeledPair> = g_in
        .edges()
        .filter(|(a, b, _)| actives.contains(*a) && actives.contains(*b))
        .map(|(a, b, _)| LabeledPair {
            author_a: a.to_string(),
            author_b: b.to_string(),
            label: pred_edge(g_pred, a, b),
        })
        .collect();
    let provenance = Provenance {
        active_authors: actives.len(),
        candidates_before_filter: pairs.len(),
        candidates_after_filter: pairs.len(),
        ..Provenance::default()
    };
    finish(window, Pattern::Persistent, pairs, provenance)
}

/// DISCONTINUED pattern: the persistent pair set with every label flipped.
pub fn label_discontinued(persistent: &LabeledPairSet) -> Result<LabeledPairSet> {
    let flipped_from = match persistent.pattern {
        Pattern::Persistent => Pattern::Discontinued,
        Pattern::Discontinued => Pattern::Persistent,
        other => {
            return Err(Error::WrongPattern {
                expected: Pattern::Persistent,
                actual: other,
            })
        }
    };
    let pairs = persistent
        .pairs
        .iter()
        .map(|p| LabeledPair {
            label: 1 - p.label,
            ..p.clone()
        })
        .collect();
    Ok(finish(
        persistent.window,
        flipped_from,
        pairs,
        persistent.provenance.clone(),
    ))
}

/// Downsamples the majority class, uniformly without replacement, to the
/// size of the minority class.
pub fn undersample(set: &LabeledPairSet, seed: u64) -> Result<LabeledPairSet> {
    let (neg, pos) = set.class_counts();
    if pos == 0 {
        return Err(Error::MissingClass(1));
    }
    if neg == 0 {
        return Err(Error::MissingClass(0));
    }
    let (majority, minority) = if neg > pos { (0u8, pos) } else { (1u8, neg) };
    let major_idx: Vec<usize> = (0..set.len())
        .filter(|&i| set.pairs[i].label == majority)
        .collect();
    let mut rng = util::rng(seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, major_idx.len(), minority)
        .into_iter()
        .map(|k| major_idx[k])
        .collect();
    chosen.sort_unstable();
    let mut keep = vec![false; set.len()];
    for &i in &chosen {
        keep[i] = true;
    }
    let pairs = set
        .pairs
        .iter()
        .zip(&keep)
        .filter(|(p, &k)| k || p.label != majority)
        .map(|(p, _)| p.clone())
        .collect();
    let mut out = set.with_pairs(pairs);
    out.provenance.undersampled = Some((minority, minority));
    Ok(out)
}

pub const MIN_SPLIT_CLASS: usize = 5;

/// Stratified split. The test set has `round(test_fraction * n)` pairs, of
/// which `round(test_fraction * positives)` are positive.
pub fn train_test_split(
    set: &LabeledPairSet,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledPairSet, LabeledPairSet)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let (neg, pos) = set.class_counts();
    for (class, count) in [(0u8, neg), (1u8, pos)] {
        if count < MIN_SPLIT_CLASS {
            return Err(Error::ClassTooSmall {
                class,
                count,
                needed: MIN_SPLIT_CLASS,
            });
        }
    }
    let n_test = (test_fraction * set.len() as f64).round() as usize;
    let pos_test = ((test_fraction * pos as f64).round() as usize).min(n_test).min(pos - 1);
    let neg_test = (n_test - pos_test).min(neg - 1);

    let mut rng = util::rng(seed);
    let mut in_test = vec![false; set.len()];
    for (class, take) in [(0u8, neg_test), (1u8, pos_test)] {
        let mut idx: Vec<usize> = (0..set.len())
            .filter(|&i| set.pairs[i].label == class)
            .collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..take] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = set
        .pairs
        .iter()
        .cloned()
        .zip(in_test)
        .partition(|(_, t)| *t);
    let strip = |v: Vec<(LabeledPair, bool)>| v.into_iter().map(|(p, _)| p).collect();
    Ok((set.with_pairs(strip(train)), set.with_pairs(strip(test))))
}

/// Everything derived from one window: the active set, the input graph
/// restricted to active authors, and the three labeled sets.
#[derive(Clone, Debug)]
pub struct WindowData {
    pub window: WindowSpec,
    pub actives: BTreeSet<String>,
    pub g_in: CoauthorGraph,
    pub new: LabeledPairSet,
    pub persistent: LabeledPairSet,
    pub discontinued: LabeledPairSet,
}

impl WindowData {
    pub fn set(&self, pattern: Pattern) -> &LabeledPairSet {
        match pattern {
            Pattern::New => &self.new,
            Pattern::Persistent => &self.persistent,
            Pattern::Discontinued => &self.discontinued,
        }
    }
}

pub fn label_window<S: PublicationSource + ?Sized>(source: &S, window: WindowSpec) -> WindowData {
    let actives = active_authors(source, &window);
    let g_in = build_graph_restricted(source, window.input_range, &actives);
    let g_pred = build_graph_restricted(source, window.prediction_range, &actives);
    let new = label_new(window, &g_in, &g_pred, &actives);
    let persistent = label_persistent(window, &g_in, &g_pred, &actives);
    let discontinued = label_discontinued(&persistent).expect("persistent input");
    WindowData {
        window,
        actives,
        g_in,
        new,
        persistent,
        discontinued,
    }
}

pub fn write_labels_csv<'a>(
    sets: impl IntoIterator<Item = &'a LabeledPairSet>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["window_index", "pattern", "author_a", "author_b", "label"])?;
    for set in sets {
        let window = set.window.index.to_string();
        for p in &set.pairs {
            w.write_record([
                window.as_str(),
                set.pattern.as_str(),
                &p.author_a,
                &p.author_b,
                if p.label == 1 { "1" } else { "0" },
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}
