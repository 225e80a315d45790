//! Per-pair feature vectors: ten structural similarity metrics over the
//! input-window graph and eight author-attribute features.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{author_career, normalize_venue, Career, PublicationSource, YearRange};
use crate::error::{Error, Result};
use crate::graph::CoauthorGraph;
use crate::topics::{author_discipline, DisciplineVector, TopicModel};
use crate::util::fmt_sig;
use crate::windows::LabeledPairSet;

pub const N_FEATURES: usize = 18;

/// Column order shared by every matrix, model and report.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "cn",
    "jc",
    "aa",
    "pa",
    "sp",
    "wcn",
    "wjc",
    "waa",
    "wpa",
    "cw",
    "discipline_sim",
    "seniority_sim",
    "seniority_level",
    "productivity_sim",
    "productivity_level",
    "diversity_sim",
    "diversity_level",
    "common_venues",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&n| n == name)
}

fn pair_indices(g: &CoauthorGraph, x: &str, y: &str) -> Result<(usize, usize)> {
    if x == y {
        return Err(Error::SameNode(x.to_string()));
    }
    Ok((g.index_of(x)?, g.index_of(y)?))
}

/// Shared neighbors z of i and j as (z, w(i,z), w(j,z)), ascending by z.
fn shared_neighbors(g: &CoauthorGraph, i: usize, j: usize) -> Vec<(usize, u32, u32)> {
    let (a, b) = (g.neighbors(i), g.neighbors(j));
    let (mut p, mut q) = (0, 0);
    let mut out = Vec::new();
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                out.push((a[p].0, a[p].1, b[q].1));
                p += 1;
                q += 1;
            }
        }
    }
    out
}

/// Number of shared neighbors.
pub fn cn(g: &CoauthorGraph, x: &str, y: &str) -> Result<usize> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(shared_neighbors(g, i, j).len())
}

/// Shared over union of neighborhoods; 0 for an empty union.
pub fn jc(g: &CoauthorGraph, x: &str, y: &str) -> Result<f64> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(jc_idx(g, i, j, shared_neighbors(g, i, j).len()))
}

fn jc_idx(g: &CoauthorGraph, i: usize, j: usize, common: usize) -> f64 {
    let union = g.degree_of(i) + g.degree_of(j) - common;
    if union == 0 {
        0.0
    } else {
        common as f64 / union as f64
    }
}

/// Adamic-Adar with the natural log of each shared neighbor's degree.
pub fn aa(g: &CoauthorGraph, x: &str, y: &str) -> Result<f64> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(aa_idx(g, &shared_neighbors(g, i, j)))
}

fn aa_idx(g: &CoauthorGraph, shared: &[(usize, u32, u32)]) -> f64 {
    shared
        .iter()
        .map(|&(z, _, _)| 1.0 / (g.degree_of(z) as f64).ln())
        .sum()
}

pub fn pa(g: &CoauthorGraph, x: &str, y: &str) -> Result<usize> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(g.degree_of(i) * g.degree_of(j))
}

/// Path length with the direct edge removed; `|V|` when no path remains.
pub fn sp(g: &CoauthorGraph, x: &str, y: &str) -> Result<usize> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(sp_idx(g, i, j))
}

fn sp_idx(g: &CoauthorGraph, i: usize, j: usize) -> usize {
    g.distance(i, j, true).unwrap_or(g.node_count())
}

fn mean_weight(wx: u32, wy: u32) -> f64 {
    (f64::from(wx) + f64::from(wy)) / 2.0
}

/// Sum over shared neighbors of the mean weight to x and y.
pub fn wcn(g: &CoauthorGraph, x: &str, y: &str) -> Result<f64> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(wcn_idx(&shared_neighbors(g, i, j)))
}

fn wcn_idx(shared: &[(usize, u32, u32)]) -> f64 {
    shared.iter().map(|&(_, wx, wy)| mean_weight(wx, wy)).sum()
}

/// wcn over the sum of both weighted degrees; 0 when both are isolated.
pub fn wjc(g: &CoauthorGraph, x: &str, y: &str) -> Result<f64> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(wjc_idx(g, i, j, wcn_idx(&shared_neighbors(g, i, j))))
}

fn wjc_idx(g: &CoauthorGraph, i: usize, j: usize, wcn: f64) -> f64 {
    let denom = g.weighted_degree_of(i) + g.weighted_degree_of(j);
    if denom == 0 {
        0.0
    } else {
        wcn / denom as f64
    }
}

/// Weighted Adamic-Adar: each shared neighbor's mean weight divided by the
/// natural log of that neighbor's weighted degree.
pub fn waa(g: &CoauthorGraph, x: &str, y: &str) -> Result<f64> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(waa_idx(g, &shared_neighbors(g, i, j)))
}

fn waa_idx(g: &CoauthorGraph, shared: &[(usize, u32, u32)]) -> f64 {
    shared
        .iter()
        .map(|&(z, wx, wy)| mean_weight(wx, wy) / (g.weighted_degree_of(z) as f64).ln())
        .sum()
}

pub fn wpa(g: &CoauthorGraph, x: &str, y: &str) -> Result<f64> {
    let (i, j) = pair_indices(g, x, y)?;
    Ok(g.weighted_degree_of(i) as f64 * g.weighted_degree_of(j) as f64)
}

/// Collaboration weight: sum over joint papers in `range` of 1/(n_i - 1).
pub fn cw<S: PublicationSource + ?Sized>(source: &S, range: YearRange, x: &str, y: &str) -> f64 {
    source
        .author_publications(x, range)
        .into_iter()
        .filter(|r| r.author_ids.iter().any(|a| a == y))
        .map(|r| 1.0 / (r.author_ids.len() - 1) as f64)
        .sum()
}

/// Cosine similarity of two discipline vectors.
pub fn discipline_similarity(va: &DisciplineVector, vb: &DisciplineVector) -> Result<f64> {
    if va.probs.len() != vb.probs.len() {
        return Err(Error::LengthMismatch(va.probs.len(), vb.probs.len()));
    }
    let dot: f64 = va.probs.iter().zip(&vb.probs).map(|(a, b)| a * b).sum();
    let na = va.probs.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = vb.probs.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// (|age_a - age_b|, age_a + age_b) with age = last - first year.
pub fn seniority_features(a: &Career, b: &Career) -> (f64, f64) {
    let (x, y) = (f64::from(a.age()), f64::from(b.age()));
    ((x - y).abs(), x + y)
}

pub fn productivity_features(count_a: usize, count_b: usize) -> (f64, f64) {
    let (x, y) = (count_a as f64, count_b as f64);
    ((x - y).abs(), x + y)
}

/// Raw-degree difference and sum in the input graph.
pub fn diversity_features(g: &CoauthorGraph, x: &str, y: &str) -> Result<(f64, f64)> {
    let (i, j) = pair_indices(g, x, y)?;
    let (dx, dy) = (g.degree_of(i) as f64, g.degree_of(j) as f64);
    Ok(((dx - dy).abs(), dx + dy))
}

/// Distinct normalized, non-empty venues of `author` in `range`.
pub fn author_venues<S: PublicationSource + ?Sized>(
    source: &S,
    range: YearRange,
    author: &str,
) -> BTreeSet<String> {
    source
        .author_publications(author, range)
        .into_iter()
        .map(|r| normalize_venue(&r.venue))
        .filter(|v| !v.is_empty())
        .collect()
}

pub fn common_venues<S: PublicationSource + ?Sized>(
    source: &S,
    range: YearRange,
    x: &str,
    y: &str,
) -> usize {
    let vx = author_venues(source, range, x);
    let vy = author_venues(source, range, y);
    vx.intersection(&vy).count()
}

/// Ten structural values (cn through cw) for node indices i, j, in
/// [`FEATURE_NAMES`] order; cw comes from `cw_value`.
fn structural_row(g: &CoauthorGraph, i: usize, j: usize, cw_value: f64) -> [f64; 10] {
    let shared = shared_neighbors(g, i, j);
    let common = shared.len();
    let wcn = wcn_idx(&shared);
    [
        common as f64,
        jc_idx(g, i, j, common),
        aa_idx(g, &shared),
        (g.degree_of(i) * g.degree_of(j)) as f64,
        sp_idx(g, i, j) as f64,
        wcn,
        wjc_idx(g, i, j, wcn),
        waa_idx(g, &shared),
        g.weighted_degree_of(i) as f64 * g.weighted_degree_of(j) as f64,
        cw_value,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub author_a: String,
    pub author_b: String,
    pub values: Vec<f64>,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn empty() -> Self {
        FeatureMatrix {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn x(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.values.as_slice()).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn column(&self, f: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[f]).collect()
    }

    /// Checks that `names` equals this matrix's feature names, reporting the
    /// positions that differ.
    pub fn check_names(&self, names: &[String]) -> Result<()> {
        if self.feature_names == names {
            return Ok(());
        }
        let n = self.feature_names.len().max(names.len());
        let diffs: Vec<String> = (0..n)
            .filter(|&i| self.feature_names.get(i) != names.get(i))
            .map(|i| {
                format!(
                    "#{i}: matrix {:?} vs model {:?}",
                    self.feature_names.get(i).map_or("<none>", String::as_str),
                    names.get(i).map_or("<none>", String::as_str)
                )
            })
            .collect();
        Err(Error::FeatureMismatch(diffs.join(", ")))
    }

    /// Header: author_a, author_b, feature names..., label. Values use 9
    /// significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        let mut header = vec!["author_a".to_string(), "author_b".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("label".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.author_a.clone(), row.author_b.clone()];
            rec.extend(row.values.iter().map(|&v| fmt_sig(v)));
            rec.push(row.label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3
            || header[0] != "author_a"
            || header[1] != "author_b"
            || header.last().map(String::as_str) != Some("label")
        {
            return Err(Error::Parse {
                line: 1,
                field: "header",
                reason: "expected author_a, author_b, <features>, label".into(),
            });
        }
        let feature_names = header[2..header.len() - 1].to_vec();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let parse_err = |field: &'static str, reason: String| Error::Parse { line, field, reason };
            let values = (2..header.len() - 1)
                .map(|c| {
                    rec.get(c)
                        .unwrap_or("")
                        .parse::<f64>()
                        .map_err(|e| parse_err("feature", format!("{}: {e}", header[c])))
                })
                .collect::<Result<Vec<_>>>()?;
            let label = match rec.get(header.len() - 1) {
                Some("0") => 0,
                Some("1") => 1,
                other => return Err(parse_err("label", format!("expected 0 or 1, got {other:?}"))),
            };
            rows.push(FeatureRow {
                author_a: rec.get(0).unwrap_or("").to_string(),
                author_b: rec.get(1).unwrap_or("").to_string(),
                values,
                label,
            });
        }
        Ok(FeatureMatrix { feature_names, rows })
    }
}

/// Per-author attributes computed once per matrix.
struct AuthorAttrs {
    career: Career,
    venues: BTreeSet<String>,
}

/// Inputs shared by every row of one (window, pattern) matrix. All corpus
/// reads go through `source` and are limited to `input_range`, or to years up
/// to its end for careers.
pub struct FeatureContext<'a, S: PublicationSource + ?Sized> {
    pub g_in: &'a CoauthorGraph,
    pub source: &'a S,
    pub input_range: YearRange,
    pub disciplines: &'a HashMap<String, DisciplineVector>,
}

/// Discipline vectors for `authors`, from their input-range documents.
/// Authors with no modeled document are left out.
pub fn discipline_table<'s, S: PublicationSource + ?Sized>(
    model: &TopicModel,
    source: &S,
    authors: impl IntoIterator<Item = &'s str>,
    range: YearRange,
) -> HashMap<String, DisciplineVector> {
    let index = model.doc_index();
    authors
        .into_iter()
        .filter_map(|a| {
            author_discipline(model, &index, source, a, range)
                .ok()
                .map(|v| (a.to_string(), v))
        })
        .collect()
}

/// One row per pair, in canonical pair order, labels carried through.
pub fn build_feature_matrix<S: PublicationSource + ?Sized>(
    pairs: &LabeledPairSet,
    ctx: &FeatureContext<'_, S>,
) -> Result<FeatureMatrix> {
    let authors: BTreeSet<&str> = pairs
        .pairs
        .iter()
        .flat_map(|p| [p.author_a.as_str(), p.author_b.as_str()])
        .collect();
    let authors: Vec<&str> = authors.into_iter().collect();
    let attrs: HashMap<&str, AuthorAttrs> = authors
        .par_iter()
        .map(|&a| {
            let career = author_career(ctx.source, a, ctx.input_range.end)?;
            let venues = author_venues(ctx.source, ctx.input_range, a);
            Ok((a, AuthorAttrs { career, venues }))
        })
        .collect::<Result<_>>()?;

    let mut ordered: Vec<_> = pairs.pairs.iter().collect();
    ordered.sort();
    let rows = ordered
        .par_iter()
        .map(|p| {
            let (a, b) = (p.author_a.as_str(), p.author_b.as_str());
            let (i, j) = pair_indices(ctx.g_in, a, b)?;
            let da = ctx
                .disciplines
                .get(a)
                .ok_or_else(|| Error::MissingDiscipline(a.to_string()))?;
            let db = ctx
                .disciplines
                .get(b)
                .ok_or_else(|| Error::MissingDiscipline(b.to_string()))?;
            let (xa, xb) = (&attrs[a], &attrs[b]);

            let mut values = Vec::with_capacity(N_FEATURES);
            values.extend(structural_row(ctx.g_in, i, j, cw(ctx.source, ctx.input_range, a, b)));
            values.push(discipline_similarity(da, db)?);
            let (s_sim, s_lvl) = seniority_features(&xa.career, &xb.career);
            let (p_sim, p_lvl) = productivity_features(xa.career.pub_count, xb.career.pub_count);
            let (d_sim, d_lvl) = diversity_features(ctx.g_in, a, b)?;
            values.extend([s_sim, s_lvl, p_sim, p_lvl, d_sim, d_lvl]);
            values.push(xa.venues.intersection(&xb.venues).count() as f64);
            debug_assert_eq!(values.len(), N_FEATURES);
            Ok(FeatureRow {
                author_a: a.to_string(),
                author_b: b.to_string(),
                values,
                label: p.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        rows,
        ..FeatureMatrix::empty()
    })
}
