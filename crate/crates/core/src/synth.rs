//! Seeded synthetic publication corpora with planted topic homophily and
//! repeat-collaboration preference.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Geometric, LogNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PublicationRecord, YearRange};
use crate::error::{Error, Result};
use crate::util;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_authors: usize,
    pub span: YearRange,
    /// Paper counts ramp linearly from the first to the last year.
    pub papers_first_year: usize,
    pub papers_last_year: usize,
    /// Success probability of the geometric team-size draw (size = 1 + failures).
    pub team_p: f64,
    pub team_min: usize,
    pub team_max: usize,
    /// Weight of topic similarity in partner choice.
    pub homophily: f64,
    /// Weight of prior joint papers in partner choice.
    pub persistence: f64,
    /// Only joint papers from this many preceding years count as prior.
    pub memory_years: i32,
    pub k_true: usize,
    /// Mass on an author's primary topic; the rest is spread by a Dirichlet draw.
    pub primary_mass: f64,
    pub vocab_size: usize,
    pub tokens_per_doc: usize,
    pub title_tokens: usize,
    pub venues_per_topic: usize,
    /// Career lengths are uniform on this inclusive range of years.
    pub career_min: i32,
    pub career_max: i32,
    /// Log-normal sigma of per-author productivity; 0 gives equal rates.
    pub productivity_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_authors: 600,
            span: YearRange::default(),
            papers_first_year: 180,
            papers_last_year: 380,
            team_p: 0.45,
            team_min: 1,
            team_max: 8,
            homophily: 2.5,
            persistence: 2.0,
            memory_years: 18,
            k_true: 6,
            primary_mass: 0.8,
            vocab_size: 1200,
            tokens_per_doc: 60,
            title_tokens: 8,
            venues_per_topic: 3,
            career_min: 6,
            career_max: 18,
            productivity_sigma: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_authors == 0 || self.k_true == 0 || self.vocab_size < self.k_true || self.tokens_per_doc == 0 {
            return bad("counts must be positive and vocab_size >= k_true");
        }
        if self.span.len() < 7 {
            return bad("span must cover at least 7 years");
        }
        if self.papers_first_year == 0 && self.papers_last_year == 0 {
            return bad("no papers to generate");
        }
        if self.team_min == 0 || self.team_min > self.team_max {
            return bad("team sizes must satisfy 1 <= team_min <= team_max");
        }
        if self.team_max > self.n_authors {
            return Err(Error::Config(format!(
                "team_max {} exceeds n_authors {}",
                self.team_max, self.n_authors
            )));
        }
        if !(self.team_p > 0.0 && self.team_p <= 1.0) {
            return bad("team_p must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.primary_mass) || self.productivity_sigma < 0.0 {
            return bad("primary_mass must be in [0, 1] and productivity_sigma >= 0");
        }
        if self.career_min < 1 || self.career_min > self.career_max {
            return bad("career lengths must satisfy 1 <= career_min <= career_max");
        }
        if !self.homophily.is_finite() || !self.persistence.is_finite() || self.venues_per_topic == 0 {
            return bad("homophily and persistence must be finite; venues_per_topic positive");
        }
        Ok(())
    }

    pub fn papers_in(&self, year: i32) -> usize {
        let t = f64::from(year - self.span.start) / f64::from((self.span.len() - 1).max(1));
        let v = self.papers_first_year as f64 + t * (self.papers_last_year as f64 - self.papers_first_year as f64);
        v.round() as usize
    }

    pub fn total_papers(&self) -> usize {
        self.span.years().map(|y| self.papers_in(y)).sum()
    }
}

/// Parameters the generator planted, for tests only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub authors: Vec<AuthorTruth>,
    /// Top ten words per true topic.
    pub topic_top_words: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthorTruth {
    pub author_id: String,
    pub primary_topic: usize,
    pub topics: Vec<f64>,
    pub first_year: i32,
    pub last_year: i32,
    pub productivity: f64,
}

impl GroundTruth {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn topic_similarity(&self, a: usize, b: usize) -> f64 {
        cosine(&self.authors[a].topics, &self.authors[b].topics)
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprtvz";
const VOWELS: &[u8] = b"aeiou";

/// Three-syllable consonant-vowel pseudo-word for a vocabulary index. They
/// end in a vowel, so no stemming rule applies.
pub fn pseudo_word(mut i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut s = String::with_capacity(6);
    for _ in 0..3 {
        let d = i % base;
        i /= base;
        s.push(CONSONANTS[d / VOWELS.len()] as char);
        s.push(VOWELS[d % VOWELS.len()] as char);
    }
    s
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize, alpha: f64) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive shape");
    let draws: Vec<f64> = (0..k).map(|_| g.sample(rng).max(1e-300)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Topic-word distributions: each topic owns a contiguous block of the
/// vocabulary with Zipf-like weights, plus a small uniform floor.
fn topic_words(k: usize, vocab: usize) -> Vec<Vec<f64>> {
    let block = vocab / k;
    (0..k)
        .map(|t| {
            let mut w = vec![0.02 / vocab as f64; vocab];
            let mut mass = 0.0;
            for r in 0..block {
                mass += 1.0 / (r as f64 + 2.0);
            }
            for r in 0..block {
                w[t * block + r] += 0.98 / (r as f64 + 2.0) / mass;
            }
            w
        })
        .collect()
}

/// Draws a team size from the geometric law truncated to [team_min, team_max].
fn team_size(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> usize {
    let geo = Geometric::new(cfg.team_p).expect("validated");
    loop {
        let s = cfg.team_min as u64 + geo.sample(rng);
        if s <= cfg.team_max as u64 {
            return s as usize;
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<(Corpus, GroundTruth)> {
    cfg.validate()?;
    let mut rng = util::rng(cfg.seed);
    let k = cfg.k_true;
    let span_len = cfg.span.len();
    let lognormal = LogNormal::new(0.0, cfg.productivity_sigma.max(1e-12)).expect("finite sigma");
    let authors: Vec<AuthorTruth> = (0..cfg.n_authors)
        .map(|i| {
            let primary = i % k;
            let rest = dirichlet(&mut rng, k, 0.5);
            let topics: Vec<f64> = (0..k)
                .map(|t| {
                    (1.0 - cfg.primary_mass) * rest[t] + if t == primary { cfg.primary_mass } else { 0.0 }
                })
                .collect();
            let len = rng.random_range(cfg.career_min..=cfg.career_max);
            let first_year = if len >= span_len {
                cfg.span.start
            } else {
                rng.random_range(cfg.span.start..=cfg.span.end - len + 1)
            };
            let productivity = if cfg.productivity_sigma == 0.0 {
                1.0
            } else {
                lognormal.sample(&mut rng)
            };
            AuthorTruth {
                author_id: format!("A{i:05}"),
                primary_topic: primary,
                topics,
                first_year,
                last_year: (first_year + len - 1).min(cfg.span.end),
                productivity,
            }
        })
        .collect();
    let sim: Vec<Vec<f64>> = authors
        .iter()
        .map(|a| authors.iter().map(|b| cosine(&a.topics, &b.topics)).collect())
        .collect();
    let words: Vec<String> = (0..cfg.vocab_size).map(pseudo_word).collect();
    let phi = topic_words(k, cfg.vocab_size);
    let venues: Vec<Vec<String>> = (0..k)
        .map(|t| {
            (0..cfg.venues_per_topic)
                .map(|v| format!("Journal of {} {}", words[t * (cfg.vocab_size / k)], v + 1))
                .collect()
        })
        .collect();

    // joint papers per (min, max) author pair, by year
    let mut joint: HashMap<(usize, usize), Vec<i32>> = HashMap::new();
    let mut records = Vec::with_capacity(cfg.total_papers());
    let mut next_id = 0usize;
    for year in cfg.span.years() {
        let active: Vec<usize> = (0..authors.len())
            .filter(|&i| authors[i].first_year <= year && year <= authors[i].last_year)
            .collect();
        if active.is_empty() {
            continue;
        }
        let seed_weights: Vec<f64> = active.iter().map(|&i| authors[i].productivity).collect();
        for _ in 0..cfg.papers_in(year) {
            let lead = active[pick(&mut rng, &seed_weights)];
            let size = team_size(cfg, &mut rng).min(active.len());
            let mut team = vec![lead];
            while team.len() < size {
                let logits: Vec<f64> = active
                    .iter()
                    .map(|&c| {
                        if team.contains(&c) {
                            return f64::NEG_INFINITY;
                        }
                        let prior: usize = team
                            .iter()
                            .filter_map(|&m| joint.get(&(m.min(c), m.max(c))))
                            .map(|ys| ys.iter().filter(|&&y| year - y <= cfg.memory_years).count())
                            .sum();
                        cfg.homophily * sim[lead][c] + cfg.persistence * prior as f64
                    })
                    .collect();
                // shift by the max so long shared histories cannot overflow
                let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|&l| (l - top).exp()).collect();
                team.push(active[pick(&mut rng, &weights)]);
            }
            let mix: Vec<f64> = (0..k)
                .map(|t| team.iter().map(|&a| authors[a].topics[t]).sum::<f64>() / team.len() as f64)
                .collect();
            let mut draw_words = |n: usize| {
                (0..n)
                    .map(|_| {
                        let t = pick(&mut rng, &mix);
                        words[pick(&mut rng, &phi[t])].as_str()
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let title = draw_words(cfg.title_tokens);
            let abstract_text = draw_words(cfg.tokens_per_doc);
            let dominant = (0..k).max_by(|&a, &b| mix[a].total_cmp(&mix[b]).then(b.cmp(&a))).unwrap_or(0);
            let venue = venues[dominant][rng.random_range(0..cfg.venues_per_topic)].clone();
            for (x, &a) in team.iter().enumerate() {
                for &b in &team[x + 1..] {
                    joint.entry((a.min(b), a.max(b))).or_default().push(year);
                }
            }
            let mut author_ids: Vec<String> = team.iter().map(|&a| authors[a].author_id.clone()).collect();
            author_ids.sort();
            records.push(PublicationRecord {
                pub_id: format!("P{next_id:06}"),
                year,
                venue,
                author_ids,
                title,
                abstract_text,
            });
            next_id += 1;
        }
    }
    let report = Corpus::from_records(records, cfg.span)?;
    if !report.rejections.is_empty() {
        return Err(Error::Config(format!(
            "generator produced {} invalid records",
            report.rejections.len()
        )));
    }
    let block = cfg.vocab_size / k;
    let truth = GroundTruth {
        config: cfg.clone(),
        authors,
        topic_top_words: (0..k)
            .map(|t| (0..block.min(10)).map(|r| words[t * block + r].clone()).collect())
            .collect(),
    };
    Ok((report.corpus, truth))
}

/// Fraction of within-paper author pairs that had already co-authored in an
/// earlier paper.
pub fn repeat_pair_rate(corpus: &Corpus) -> f64 {
    let mut seen = std::collections::HashSet::new();
    let (mut repeats, mut total) = (0usize, 0usize);
    let mut records: Vec<&PublicationRecord> = corpus.records().iter().collect();
    records.sort_by(|a, b| a.year.cmp(&b.year).then_with(|| a.pub_id.cmp(&b.pub_id)));
    for r in records {
        for (i, a) in r.author_ids.iter().enumerate() {
            for b in &r.author_ids[i + 1..] {
                total += 1;
                if !seen.insert((a.clone(), b.clone())) {
                    repeats += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        repeats as f64 / total as f64
    }
}
