//! Text preprocessing, LDA via collapsed Gibbs sampling, UMass coherence
//! and per-author discipline vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{PublicationRecord, PublicationSource, YearRange};
use crate::error::{Error, Result};
use crate::util;

const BUNDLED_STOPWORDS: &str = include_str!("stopwords.txt");

pub fn default_stopwords() -> HashSet<String> {
    BUNDLED_STOPWORDS.split_whitespace().map(str::to_string).collect()
}

/// Reads a whitespace-separated stopword file.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(text.split_whitespace().map(str::to_lowercase).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub pub_id: String,
    pub tokens: Vec<String>,
}

const MIN_STEM: usize = 3;
const SUFFIXES: [&str; 5] = ["ation", "ity", "ing", "ed", "s"];

/// Strips the first matching suffix among -ation, -ity, -ing, -ed, -s when
/// at least three characters remain. Words ending in -ss, -is or -us keep
/// their final s.
pub fn stem(token: &str) -> String {
    for suffix in SUFFIXES {
        if let Some(base) = token.strip_suffix(suffix) {
            if suffix == "s" && (base.ends_with('s') || base.ends_with('i') || base.ends_with('u')) {
                return token.to_string();
            }
            if base.chars().count() >= MIN_STEM {
                return base.to_string();
            }
        }
    }
    token.to_string()
}

fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for c in text.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => {
                in_tag = false;
                out.push(' ');
            }
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out
}

/// lowercase, drop markup and non-alphanumeric characters, split on
/// whitespace, drop stopwords, numbers and 1-character tokens, then stem.
pub fn preprocess(
    pub_id: &str,
    title: &str,
    abstract_text: &str,
    stopwords: &HashSet<String>,
) -> TokenizedDoc {
    let raw = format!("{title} {abstract_text}").to_lowercase();
    let cleaned: String = strip_tags(&raw)
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let tokens = cleaned
        .split_whitespace()
        .filter(|t| t.chars().count() >= 2)
        .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
        .filter(|t| !stopwords.contains(*t))
        .map(stem)
        .collect();
    TokenizedDoc {
        pub_id: pub_id.to_string(),
        tokens,
    }
}

pub fn tokenize_records<'a>(
    records: impl IntoIterator<Item = &'a PublicationRecord>,
    stopwords: &HashSet<String>,
) -> Vec<TokenizedDoc> {
    records
        .into_iter()
        .map(|r| preprocess(&r.pub_id, &r.title, &r.abstract_text, stopwords))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    /// Terms found in fewer documents are dropped from the vocabulary.
    pub min_doc_freq: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            k: 6,
            alpha: 0.1,
            beta: 0.01,
            iterations: 500,
            min_doc_freq: 2,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Topics(format!("need at least 2 topics, got {}", self.k)));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Topics("alpha and beta must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Topics("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unnormalized collapsed-Gibbs weight of assigning a token of word `w` in
/// document `d` to topic `k`, with all counts excluding the token itself.
#[inline]
pub fn gibbs_weight(n_dk: f64, alpha: f64, n_kw: f64, beta: f64, n_k: f64, vocab_size: usize) -> f64 {
    (n_dk + alpha) * (n_kw + beta) / (n_k + vocab_size as f64 * beta)
}

/// Raw assignment counts of a sampler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicCounts {
    pub k: usize,
    pub vocab_size: usize,
    /// docs x k, row-major
    pub doc_topic: Vec<u32>,
    /// k x vocab, row-major
    pub topic_word: Vec<u32>,
    pub topic_total: Vec<u32>,
}

pub struct GibbsSampler {
    config: LdaConfig,
    vocab: Vec<String>,
    doc_ids: Vec<String>,
    words: Vec<Vec<u32>>,
    assignments: Vec<Vec<u16>>,
    counts: TopicCounts,
    rng: rand_chacha::ChaCha8Rng,
    weights: Vec<f64>,
}

impl GibbsSampler {
    /// Builds the vocabulary and draws a uniform random initial assignment.
    pub fn new(docs: &[TokenizedDoc], config: LdaConfig) -> Result<Self> {
        config.validate()?;
        if config.k > usize::from(u16::MAX) {
            return Err(Error::Topics("too many topics".into()));
        }
        if docs.is_empty() {
            return Err(Error::Topics("empty document collection".into()));
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let unique: BTreeSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let vocab: Vec<String> = df
            .into_iter()
            .filter(|&(_, n)| n >= config.min_doc_freq)
            .map(|(t, _)| t.to_string())
            .collect();
        if vocab.is_empty() {
            return Err(Error::Topics("vocabulary is empty after filtering".into()));
        }
        let index: HashMap<&str, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u32))
            .collect();
        let words: Vec<Vec<u32>> = docs
            .iter()
            .map(|d| d.tokens.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
            .collect();
        let nonempty = words.iter().filter(|w| !w.is_empty()).count();
        if nonempty < config.k {
            return Err(Error::Topics(format!(
                "{nonempty} non-empty documents, need at least k = {}",
                config.k
            )));
        }

        let k = config.k;
        let v = vocab.len();
        let mut counts = TopicCounts {
            k,
            vocab_size: v,
            doc_topic: vec![0; docs.len() * k],
            topic_word: vec![0; k * v],
            topic_total: vec![0; k],
        };
        let mut rng = util::rng(config.seed);
        let assignments = words
            .iter()
            .enumerate()
            .map(|(d, ws)| {
                ws.iter()
                    .map(|&w| {
                        let z = rng.random_range(0..k);
                        counts.doc_topic[d * k + z] += 1;
                        counts.topic_word[z * v + w as usize] += 1;
                        counts.topic_total[z] += 1;
                        z as u16
                    })
                    .collect()
            })
            .collect();
        Ok(GibbsSampler {
            vocab,
            doc_ids: docs.iter().map(|d| d.pub_id.clone()).collect(),
            words,
            assignments,
            counts,
            rng,
            weights: vec![0.0; k],
            config,
        })
    }

    /// One full pass resampling every token's topic.
    pub fn sweep(&mut self) {
        let k = self.config.k;
        let v = self.vocab.len();
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let c = &mut self.counts;
        for (d, ws) in self.words.iter().enumerate() {
            for (pos, &w) in ws.iter().enumerate() {
                let w = w as usize;
                let old = self.assignments[d][pos] as usize;
                c.doc_topic[d * k + old] -= 1;
                c.topic_word[old * v + w] -= 1;
                c.topic_total[old] -= 1;

                let mut total = 0.0;
                for (t, slot) in self.weights.iter_mut().enumerate() {
                    total += gibbs_weight(
                        f64::from(c.doc_topic[d * k + t]),
                        alpha,
                        f64::from(c.topic_word[t * v + w]),
                        beta,
                        f64::from(c.topic_total[t]),
                        v,
                    );
                    *slot = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.iter().position(|&cum| u < cum).unwrap_or(k - 1);

                c.doc_topic[d * k + new] += 1;
                c.topic_word[new * v + w] += 1;
                c.topic_total[new] += 1;
                self.assignments[d][pos] = new as u16;
            }
        }
    }

    pub fn counts(&self) -> &TopicCounts {
        &self.counts
    }

    pub fn token_count(&self) -> usize {
        self.words.iter().map(Vec::len).sum()
    }

    pub fn into_model(self) -> TopicModel {
        let TopicCounts {
            k,
            vocab_size: v,
            doc_topic,
            topic_word,
            topic_total,
        } = self.counts;
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let doc_rows = doc_topic
            .chunks(k)
            .map(|row| {
                let n_d: u32 = row.iter().sum();
                let denom = f64::from(n_d) + k as f64 * alpha;
                row.iter().map(|&n| (f64::from(n) + alpha) / denom).collect()
            })
            .collect();
        let word_rows = topic_word
            .chunks(v)
            .zip(&topic_total)
            .map(|(row, &n_k)| {
                let denom = f64::from(n_k) + v as f64 * beta;
                row.iter().map(|&n| (f64::from(n) + beta) / denom).collect()
            })
            .collect();
        TopicModel {
            k,
            alpha,
            beta,
            vocab: self.vocab,
            doc_ids: self.doc_ids,
            topic_word: word_rows,
            doc_topic: doc_rows,
        }
    }
}

/// Fitted LDA model. Probability matrices are read from the final Gibbs
/// counts with symmetric smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vec<String>,
    pub doc_ids: Vec<String>,
    /// k rows over the vocabulary
    pub topic_word: Vec<Vec<f64>>,
    /// one row of k probabilities per document
    pub doc_topic: Vec<Vec<f64>>,
}

pub fn fit_lda(docs: &[TokenizedDoc], config: LdaConfig) -> Result<TopicModel> {
    let iterations = config.iterations;
    let mut sampler = GibbsSampler::new(docs, config)?;
    for _ in 0..iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model())
}

impl TopicModel {
    /// Top `n` term indices of `topic`, by probability descending then index.
    pub fn top_terms(&self, topic: usize, n: usize) -> Vec<usize> {
        let row = &self.topic_word[topic];
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }

    pub fn doc_index(&self) -> HashMap<&str, usize> {
        self.doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }

    /// topic, rank, term, probability
    pub fn write_top_words_csv(&self, top_n: usize, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["topic", "rank", "term", "probability"])?;
        for topic in 0..self.k {
            for (rank, t) in self.top_terms(topic, top_n).into_iter().enumerate() {
                w.write_record([
                    topic.to_string(),
                    (rank + 1).to_string(),
                    self.vocab[t].clone(),
                    util::fmt_sig(self.topic_word[topic][t]),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// One UMass term: log((D(w_m, w_l) + 1) / D(w_l)).
pub fn umass_pair_term(co_docs: usize, docs_l: usize) -> f64 {
    ((co_docs as f64 + 1.0) / docs_l as f64).ln()
}

/// UMass coherence of each topic over its `top_n` words, with document
/// co-occurrence counted on `docs`. Pairs whose conditioning word occurs in
/// no document are skipped.
pub fn coherence(model: &TopicModel, docs: &[TokenizedDoc], top_n: usize) -> Vec<f64> {
    let doc_sets: Vec<HashSet<&str>> = docs
        .iter()
        .map(|d| d.tokens.iter().map(String::as_str).collect())
        .collect();
    let df = |w: &str| doc_sets.iter().filter(|s| s.contains(w)).count();
    let co = |a: &str, b: &str| doc_sets.iter().filter(|s| s.contains(a) && s.contains(b)).count();

    (0..model.k)
        .map(|topic| {
            let top: Vec<&str> = model
                .top_terms(topic, top_n)
                .into_iter()
                .map(|i| model.vocab[i].as_str())
                .collect();
            let mut score = 0.0;
            for m in 1..top.len() {
                for l in 0..m {
                    let d_l = df(top[l]);
                    if d_l == 0 {
                        log::warn!("coherence: top word {:?} of topic {topic} occurs in no document", top[l]);
                        continue;
                    }
                    score += umass_pair_term(co(top[m], top[l]), d_l);
                }
            }
            score
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisciplineVector {
    pub author_id: String,
    pub probs: Vec<f64>,
}

/// Mean of the author's document-topic rows over their publications in
/// `range` that the model was fitted on.
pub fn author_discipline<S: PublicationSource + ?Sized>(
    model: &TopicModel,
    doc_index: &HashMap<&str, usize>,
    source: &S,
    author: &str,
    range: YearRange,
) -> Result<DisciplineVector> {
    let rows: Vec<&Vec<f64>> = source
        .author_publications(author, range)
        .into_iter()
        .filter_map(|r| doc_index.get(r.pub_id.as_str()))
        .map(|&i| &model.doc_topic[i])
        .collect();
    mean_rows(author, &rows)
}

pub(crate) fn mean_rows(author: &str, rows: &[&Vec<f64>]) -> Result<DisciplineVector> {
    let Some(first) = rows.first() else {
        return Err(Error::AbsentAuthor(author.to_string()));
    };
    let mut probs = vec![0.0; first.len()];
    for row in rows {
        for (acc, &p) in probs.iter_mut().zip(row.iter()) {
            *acc += p;
        }
    }
    let n = rows.len() as f64;
    probs.iter_mut().for_each(|p| *p /= n);
    Ok(DisciplineVector {
        author_id: author.to_string(),
        probs,
    })
}
