//! Fixtures and brute-force references shared by the integration tests and
//! the acceptance target. Every reference here is written from the
//! definitions directly, without the crate's own helpers.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use copattern::corpus::{Corpus, PublicationRecord, YearRange};
use copattern::features::{self, FEATURE_NAMES};
use copattern::graph::build_graph;
use copattern::models::{EnsembleKind, TreeEnsemble, TreeNode};
use copattern::topics::{fit_lda, LdaConfig, TokenizedDoc};
use copattern::windows::{LabeledPair, WindowData, WindowSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub const SPAN: YearRange = YearRange { start: 2000, end: 2017 };

pub fn record(id: &str, year: i32, venue: &str, authors: &[&str]) -> PublicationRecord {
    PublicationRecord {
        pub_id: id.to_string(),
        year,
        venue: venue.to_string(),
        author_ids: authors.iter().map(|a| a.to_string()).collect(),
        title: String::new(),
        abstract_text: String::new(),
    }
}

/// A small random corpus dated in `range`: up to `n_authors` authors, teams
/// of 1 to 5, a handful of venues. Solo papers leave some authors isolated.
pub fn random_corpus(rng: &mut ChaCha8Rng, n_authors: usize, n_papers: usize, range: YearRange) -> Corpus {
    let names: Vec<String> = (0..n_authors).map(|i| format!("u{i:02}")).collect();
    let records = (0..n_papers)
        .map(|p| {
            let size = rng.random_range(1..=5.min(n_authors));
            let mut team = BTreeSet::new();
            while team.len() < size {
                team.insert(rng.random_range(0..n_authors));
            }
            PublicationRecord {
                pub_id: format!("p{p:04}"),
                year: rng.random_range(range.start..=range.end),
                venue: format!("Venue {}", rng.random_range(0..6)),
                author_ids: team.iter().map(|&i| names[i].clone()).collect(),
                title: String::new(),
                abstract_text: String::new(),
            }
        })
        .collect();
    Corpus::from_records(records, range).unwrap().corpus
}

/// Dense weight matrix over the authors of `records`, counted paper by paper.
pub struct Dense {
    pub names: Vec<String>,
    pub w: Vec<Vec<u32>>,
}

impl Dense {
    pub fn from_records(records: &[PublicationRecord]) -> Dense {
        let names: Vec<String> = records
            .iter()
            .flat_map(|r| r.author_ids.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pos: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let n = names.len();
        let mut w = vec![vec![0u32; n]; n];
        for r in records {
            for a in &r.author_ids {
                for b in &r.author_ids {
                    if a != b {
                        w[pos[a.as_str()]][pos[b.as_str()]] += 1;
                    }
                }
            }
        }
        Dense { names, w }
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    fn deg(&self, i: usize) -> usize {
        self.w[i].iter().filter(|&&x| x > 0).count()
    }

    fn wdeg(&self, i: usize) -> u32 {
        self.w[i].iter().sum()
    }

    /// BFS by scanning matrix rows, with the i-j edge ignored.
    fn sp(&self, i: usize, j: usize) -> usize {
        let n = self.n();
        let mut dist = vec![usize::MAX; n];
        dist[i] = 0;
        let mut frontier = vec![i];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &u in &frontier {
                for v in 0..n {
                    let blocked = (u == i && v == j) || (u == j && v == i);
                    if self.w[u][v] > 0 && !blocked && dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        if dist[j] == usize::MAX {
            n
        } else {
            dist[j]
        }
    }

    /// cn, jc, aa, pa, sp, wcn, wjc, waa, wpa in that order.
    pub fn structural(&self, i: usize, j: usize) -> [f64; 9] {
        let n = self.n();
        let (mut cn, mut union, mut aa, mut wcn, mut waa) = (0usize, 0usize, 0.0, 0.0, 0.0);
        for z in 0..n {
            let (a, b) = (self.w[i][z] > 0, self.w[j][z] > 0);
            if a || b {
                union += 1;
            }
            if a && b {
                cn += 1;
                aa += 1.0 / (self.deg(z) as f64).ln();
                let mean = (self.w[i][z] + self.w[j][z]) as f64 / 2.0;
                wcn += mean;
                waa += mean / (self.wdeg(z) as f64).ln();
            }
        }
        let jc = if union == 0 { 0.0 } else { cn as f64 / union as f64 };
        let wden = (self.wdeg(i) + self.wdeg(j)) as f64;
        let wjc = if wden == 0.0 { 0.0 } else { wcn / wden };
        [
            cn as f64,
            jc,
            aa,
            (self.deg(i) * self.deg(j)) as f64,
            self.sp(i, j) as f64,
            wcn,
            wjc,
            waa,
            self.wdeg(i) as f64 * self.wdeg(j) as f64,
        ]
    }
}

pub fn brute_cw(records: &[PublicationRecord], x: &str, y: &str) -> f64 {
    records
        .iter()
        .filter(|r| r.author_ids.iter().any(|a| a == x) && r.author_ids.iter().any(|a| a == y))
        .map(|r| 1.0 / (r.author_ids.len() - 1) as f64)
        .sum()
}

pub fn brute_common_venues(records: &[PublicationRecord], x: &str, y: &str) -> usize {
    let venues = |who: &str| -> BTreeSet<String> {
        records
            .iter()
            .filter(|r| r.author_ids.iter().any(|a| a == who))
            .map(|r| r.venue.trim().to_lowercase())
            .collect()
    };
    venues(x).intersection(&venues(y)).count()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    let scale = want.abs().max(1e-300);
    if got == want {
        0.0
    } else {
        (got - want).abs() / scale
    }
}

/// Outcome of the structural-metric oracle sweep.
#[derive(Debug, Default)]
pub struct MetricSweep {
    pub graphs: usize,
    pub pairs: usize,
    pub exact_mismatches: Vec<String>,
    pub worst_rel: f64,
    pub worst_at: String,
}

/// Compares all ten structural metrics plus common venues against the dense
/// references on every pair of `n_graphs` random corpora of at most 30 authors.
pub fn metric_sweep(n_graphs: usize, seed: u64) -> MetricSweep {
    let mut rng = copattern::util::rng(seed);
    let range = YearRange { start: 2005, end: 2008 };
    let mut out = MetricSweep::default();
    for g_idx in 0..n_graphs {
        let n_authors = rng.random_range(2..=30);
        let n_papers = rng.random_range(1..=60);
        let corpus = random_corpus(&mut rng, n_authors, n_papers, range);
        let g = build_graph(&corpus, range);
        let records = corpus.records();
        let dense = Dense::from_records(records);
        assert_eq!(g.nodes(), dense.names.as_slice());
        out.graphs += 1;
        for i in 0..dense.n() {
            for j in i + 1..dense.n() {
                let (x, y) = (dense.names[i].as_str(), dense.names[j].as_str());
                let want = dense.structural(i, j);
                let got = [
                    features::cn(&g, x, y).unwrap() as f64,
                    features::jc(&g, x, y).unwrap(),
                    features::aa(&g, x, y).unwrap(),
                    features::pa(&g, x, y).unwrap() as f64,
                    features::sp(&g, x, y).unwrap() as f64,
                    features::wcn(&g, x, y).unwrap(),
                    features::wjc(&g, x, y).unwrap(),
                    features::waa(&g, x, y).unwrap(),
                    features::wpa(&g, x, y).unwrap(),
                ];
                out.pairs += 1;
                let at = |name: &str| format!("graph {g_idx} ({x},{y}) {name}");
                for (k, (&a, &b)) in got.iter().zip(&want).enumerate() {
                    let name = FEATURE_NAMES[k];
                    if matches!(name, "cn" | "pa" | "sp") {
                        if a != b {
                            out.exact_mismatches.push(format!("{}: {a} vs {b}", at(name)));
                        }
                    } else {
                        let e = rel_err(a, b);
                        if e > out.worst_rel {
                            out.worst_rel = e;
                            out.worst_at = at(name);
                        }
                    }
                }
                let cw = features::cw(&corpus, range, x, y);
                let e = rel_err(cw, brute_cw(records, x, y));
                if e > out.worst_rel {
                    out.worst_rel = e;
                    out.worst_at = at("cw");
                }
                let cv = features::common_venues(&corpus, range, x, y);
                let want_cv = brute_common_venues(records, x, y);
                if cv != want_cv {
                    out.exact_mismatches.push(format!("{}: {cv} vs {want_cv}", at("common_venues")));
                }
            }
        }
    }
    out
}

/// Pairwise AUC with ties worth one half.
pub fn naive_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Mean precision at each positive, where j ranks at or above k when it
/// scores higher or ties and comes no later in the input.
pub fn naive_ap(labels: &[u8], scores: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut positives = 0.0;
    for k in 0..labels.len() {
        if labels[k] != 1 {
            continue;
        }
        positives += 1.0;
        let above: Vec<usize> = (0..labels.len())
            .filter(|&j| scores[j] > scores[k] || (scores[j] == scores[k] && j <= k))
            .collect();
        let hits = above.iter().filter(|&&j| labels[j] == 1).count();
        total += hits as f64 / above.len() as f64;
    }
    total / positives
}

/// (precision, recall, f1) at `score >= threshold`.
pub fn naive_prf(labels: &[u8], scores: &[f64], threshold: f64) -> (f64, f64, f64) {
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let tp = labels.iter().zip(&predicted).filter(|(&y, &p)| y == 1 && p).count() as f64;
    let pp = predicted.iter().filter(|&&p| p).count() as f64;
    let ap = labels.iter().filter(|&&y| y == 1).count() as f64;
    let precision = if pp == 0.0 { 0.0 } else { tp / pp };
    let recall = if ap == 0.0 { 0.0 } else { tp / ap };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// A random valid tree over `features`: covers split additively and every
/// node keeps a positive cover.
pub fn random_tree(rng: &mut ChaCha8Rng, features: &[usize], depth: usize, cover: f64) -> TreeNode {
    if depth == 0 || cover < 2.0 || rng.random_bool(0.2) {
        return TreeNode::Leaf {
            value: rng.random_range(-2.0..2.0),
            cover,
        };
    }
    let left_cover = rng.random_range(1..cover as u64) as f64;
    TreeNode::Split {
        feature: features[rng.random_range(0..features.len())],
        threshold: rng.random_range(-1.0..1.0),
        cover,
        left: Box::new(random_tree(rng, features, depth - 1, left_cover)),
        right: Box::new(random_tree(rng, features, depth - 1, cover - left_cover)),
    }
}

/// A random ensemble of 1 to 5 trees splitting on at most `max_active` of
/// `n_features` features, with a random kind.
pub fn random_ensemble(rng: &mut ChaCha8Rng, n_features: usize, max_active: usize) -> TreeEnsemble {
    let active = rng.random_range(1..=max_active.min(n_features));
    let mut pool: Vec<usize> = (0..n_features).collect();
    for i in 0..active {
        let j = rng.random_range(i..n_features);
        pool.swap(i, j);
    }
    let features = &pool[..active];
    let kind = match rng.random_range(0..3) {
        0 => EnsembleKind::Single,
        1 => EnsembleKind::Forest,
        _ => EnsembleKind::Boosted,
    };
    let n_trees = if kind == EnsembleKind::Single { 1 } else { rng.random_range(1..=5) };
    let trees = (0..n_trees)
        .map(|_| {
            let depth = rng.random_range(1..=6);
            let cover = rng.random_range(8..200) as f64;
            random_tree(rng, features, depth, cover)
        })
        .collect();
    TreeEnsemble {
        kind,
        n_features,
        trees,
        learning_rate: rng.random_range(0.05..1.0),
        base_score: rng.random_range(-1.0..1.0),
    }
}

pub fn random_row(rng: &mut ChaCha8Rng, n_features: usize) -> Vec<f64> {
    (0..n_features).map(|_| rng.random_range(-1.2..1.2)).collect()
}

// Planted three-topic corpora for LDA recovery.

pub const K: usize = 3;
pub const BLOCK: usize = 12;

fn topic_term(i: usize) -> String {
    format!("term{i:03}")
}

/// Each true topic puts 90% of its mass on its own block of words and
/// spreads the rest over the whole vocabulary.
pub fn true_topics() -> Vec<Vec<f64>> {
    let v = K * BLOCK;
    (0..K)
        .map(|t| {
            (0..v)
                .map(|w| 0.1 / v as f64 + if w / BLOCK == t { 0.9 / BLOCK as f64 } else { 0.0 })
                .collect()
        })
        .collect()
}

fn draw_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn lda_corpus(seed: u64, n_docs: usize, len: usize) -> Vec<TokenizedDoc> {
    let mut rng = copattern::util::rng(seed);
    let phi = true_topics();
    let gamma = Gamma::new(0.3, 1.0).unwrap();
    (0..n_docs)
        .map(|d| {
            let theta: Vec<f64> = (0..K).map(|_| gamma.sample(&mut rng)).collect();
            let tokens = (0..len)
                .map(|_| {
                    let t = draw_index(&mut rng, &theta);
                    topic_term(draw_index(&mut rng, &phi[t]))
                })
                .collect();
            TokenizedDoc {
                pub_id: format!("d{d:04}"),
                tokens,
            }
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

pub fn lda_config(iterations: usize, seed: u64) -> LdaConfig {
    LdaConfig {
        k: K,
        alpha: 0.1,
        beta: 0.01,
        iterations,
        min_doc_freq: 1,
        seed,
    }
}

/// Per-topic cosine under the best matching of fitted to true topics.
pub fn best_permutation_cosines(seed: u64) -> Vec<f64> {
    let docs = lda_corpus(seed, 300, 40);
    let model = fit_lda(&docs, lda_config(2000, seed)).unwrap();
    let truth = true_topics();
    // fitted rows are over the model's own vocabulary order
    let fitted: Vec<Vec<f64>> = model
        .topic_word
        .iter()
        .map(|row| {
            let mut out = vec![0.0; K * BLOCK];
            for (p, term) in row.iter().zip(&model.vocab) {
                out[term[4..].parse::<usize>().unwrap()] = *p;
            }
            out
        })
        .collect();
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms
        .iter()
        .map(|p| (0..K).map(|t| cosine(&fitted[p[t]], &truth[t])).collect::<Vec<_>>())
        .max_by(|a, b| a.iter().sum::<f64>().total_cmp(&b.iter().sum::<f64>()))
        .unwrap()
}

/// Independent reading of one window straight from the records: the active
/// set, input adjacency among actives, and prediction-window pairs.
struct Reference {
    actives: BTreeSet<String>,
    input_adj: HashMap<String, BTreeSet<String>>,
    pred_pairs: BTreeSet<(String, String)>,
}

impl Reference {
    fn new(corpus: &Corpus, w: &WindowSpec) -> Reference {
        let authors_in = |lo: i32, hi: i32| -> BTreeSet<String> {
            corpus
                .records()
                .iter()
                .filter(|r| (lo..=hi).contains(&r.year))
                .flat_map(|r| r.author_ids.clone())
                .collect()
        };
        let (i, p) = (w.input_range, w.prediction_range);
        let actives: BTreeSet<String> = authors_in(i.start, i.end)
            .intersection(&authors_in(p.start, p.end))
            .cloned()
            .collect();
        let mut input_adj: HashMap<String, BTreeSet<String>> = HashMap::new();
        let mut pred_pairs = BTreeSet::new();
        for r in corpus.records() {
            let team: Vec<&String> = r.author_ids.iter().filter(|a| actives.contains(*a)).collect();
            for a in &team {
                for b in &team {
                    if a == b {
                        continue;
                    }
                    if i.contains(r.year) {
                        input_adj.entry((*a).clone()).or_default().insert((*b).clone());
                    }
                    if p.contains(r.year) && a < b {
                        pred_pairs.insert(((*a).clone(), (*b).clone()));
                    }
                }
            }
        }
        Reference {
            actives,
            input_adj,
            pred_pairs,
        }
    }

    fn linked(&self, a: &str, b: &str) -> bool {
        self.input_adj.get(a).is_some_and(|s| s.contains(b))
    }

    /// Component label per author reachable in the input graph, by BFS.
    fn components(&self) -> HashMap<String, usize> {
        let mut label: HashMap<String, usize> = HashMap::new();
        for start in &self.actives {
            if label.contains_key(start) {
                continue;
            }
            let id = label.len();
            label.insert(start.clone(), id);
            let mut queue = VecDeque::from([start.clone()]);
            while let Some(u) = queue.pop_front() {
                for v in self.input_adj.get(&u).into_iter().flatten() {
                    if !label.contains_key(v) {
                        label.insert(v.clone(), id);
                        queue.push_back(v.clone());
                    }
                }
            }
        }
        label
    }
}

/// Checks every labeled set of one window against the reference; returns a
/// description of the first disagreement.
pub fn check_window(corpus: &Corpus, data: &WindowData) -> Result<(), String> {
    let r = Reference::new(corpus, &data.window);
    if data.actives != r.actives {
        return Err("active sets differ".into());
    }
    let key = |p: &LabeledPair| (p.author_a.clone(), p.author_b.clone());

    let persistent: Vec<_> = data.persistent.pairs.iter().map(key).collect();
    let discontinued: Vec<_> = data.discontinued.pairs.iter().map(key).collect();
    if persistent != discontinued {
        return Err("persistent and discontinued pair sets differ".into());
    }
    for (p, d) in data.persistent.pairs.iter().zip(&data.discontinued.pairs) {
        if p.label + d.label != 1 {
            return Err(format!("labels of {:?} are not complements", key(p)));
        }
    }

    let mut want_persistent = BTreeSet::new();
    let mut want_new = BTreeSet::new();
    let comp = r.components();
    let actives: Vec<&String> = r.actives.iter().collect();
    for (i, a) in actives.iter().enumerate() {
        for b in &actives[i + 1..] {
            if r.linked(a, b) {
                want_persistent.insert(((*a).clone(), (*b).clone()));
            } else if comp[*a] == comp[*b] {
                want_new.insert(((*a).clone(), (*b).clone()));
            }
        }
    }
    let got_new: BTreeSet<_> = data.new.pairs.iter().map(key).collect();
    if got_new != want_new {
        return Err(format!("NEW candidates differ ({} vs {})", got_new.len(), want_new.len()));
    }
    if persistent.iter().cloned().collect::<BTreeSet<_>>() != want_persistent {
        return Err("PERSISTENT candidates differ".into());
    }
    for p in data.new.pairs.iter().chain(&data.persistent.pairs) {
        if r.pred_pairs.contains(&key(p)) != (p.label == 1) {
            return Err(format!("label of {:?} disagrees with the prediction window", key(p)));
        }
    }
    Ok(())
}
