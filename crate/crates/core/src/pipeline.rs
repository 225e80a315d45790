//! End-to-end runs: windows, topics, features, model search, evaluation
//! and SHAP, with an artifact tree and a run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, write_rejections, yearly_counts, AccessAudit, Corpus, PublicationSource, YearRange};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_plot_csv, write_report_csv, EvalReport, Metrics};
use crate::explain::{explain, summarize, write_shap_csv, write_summary_csv, ShapSummary};
use crate::features::{build_feature_matrix, discipline_table, FeatureContext, FeatureMatrix};
use crate::graph::build_graph_restricted;
use crate::models::cv::{CvConfig, CV_METRICS};
use crate::models::{random_search, train, ModelFile, ModelKind, SearchResult, SearchSpace};
use crate::topics::{coherence, default_stopwords, fit_lda, tokenize_records, LdaConfig, TopicModel};
use crate::util::{self, fmt_sig};
use crate::windows::{enumerate_windows, label_window, train_test_split, undersample, write_labels_csv, Pattern, WindowSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSettings {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub min_doc_freq: usize,
}

impl Default for LdaSettings {
    fn default() -> Self {
        let d = LdaConfig::default();
        LdaSettings {
            k: d.k,
            alpha: d.alpha,
            beta: d.beta,
            iterations: d.iterations,
            min_doc_freq: d.min_doc_freq,
        }
    }
}

impl LdaSettings {
    pub fn to_config(&self, seed: u64) -> LdaConfig {
        LdaConfig {
            k: self.k,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            min_doc_freq: self.min_doc_freq,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub span: YearRange,
    pub input_len: i32,
    pub pred_len: i32,
    pub stride: i32,
    /// Window indices to run; all windows when absent.
    pub windows: Option<Vec<usize>>,
    pub patterns: Vec<Pattern>,
    pub lda: LdaSettings,
    pub models: Vec<ModelKind>,
    /// Replaces the default search space of the named kinds.
    pub search_spaces: Vec<SearchSpace>,
    pub n_trials: usize,
    pub cv_folds: usize,
    pub cv_repeats: usize,
    pub test_fraction: f64,
    pub threshold: f64,
    pub undersample: bool,
    /// Cap on test rows explained per model, in canonical pair order.
    pub explain_rows: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            span: YearRange::default(),
            input_len: 4,
            pred_len: 3,
            stride: 1,
            windows: None,
            patterns: Pattern::ALL.to_vec(),
            lda: LdaSettings::default(),
            models: ModelKind::ALL.to_vec(),
            search_spaces: Vec::new(),
            n_trials: 25,
            cv_folds: 5,
            cv_repeats: 3,
            test_fraction: 0.2,
            threshold: 0.5,
            undersample: true,
            explain_rows: None,
            seed: 0,
            out_dir: PathBuf::from("out"),
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.lda
            .to_config(0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let windows = enumerate_windows(self.span, self.input_len, self.pred_len, self.stride)
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(sel) = &self.windows {
            if sel.is_empty() {
                return bad("window selection is empty".into());
            }
            if let Some(w) = sel.iter().find(|&&w| w >= windows.len()) {
                return bad(format!("window {w} out of range ({} windows)", windows.len()));
            }
        }
        if self.patterns.is_empty() || self.models.is_empty() {
            return bad("patterns and models must be nonempty".into());
        }
        if self.n_trials == 0 || self.cv_folds < 2 || self.cv_repeats == 0 {
            return bad("n_trials >= 1, cv_folds >= 2 and cv_repeats >= 1 required".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        for space in &self.search_spaces {
            space.validate()?;
        }
        Ok(())
    }

    pub fn selected_windows(&self) -> Result<Vec<WindowSpec>> {
        let all = enumerate_windows(self.span, self.input_len, self.pred_len, self.stride)?;
        Ok(match &self.windows {
            None => all,
            Some(sel) => {
                let mut sel = sel.clone();
                sel.sort_unstable();
                sel.dedup();
                sel.into_iter().map(|i| all[i]).collect()
            }
        })
    }

    pub fn space_for(&self, kind: ModelKind) -> SearchSpace {
        self.search_spaces
            .iter()
            .rev()
            .find(|s| s.kind == kind)
            .cloned()
            .unwrap_or_else(|| SearchSpace::default_for(kind))
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            folds: self.cv_folds,
            repeats: self.cv_repeats,
            threshold: self.threshold,
        }
    }

    /// SHA-256 of the configuration with the output directory and worker
    /// count cleared, so runs that differ only in those share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.workers = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Substitutions relative to the original method, always listed in the manifest.
pub const DEVIATIONS: [&str; 4] = [
    "rule-based suffix stemming replaces dictionary lemmatization",
    "UMass coherence replaces C_v coherence",
    "SHAP values are on the raw-score scale (log-odds for logistic and boosted models, mean leaf value for trees and forests)",
    "random search selects by mean cross-validated average precision",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Corpus,
    Windows,
    Topics,
    Features,
    Models,
    Eval,
    Explain,
    Write,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Corpus => "corpus",
            Stage::Windows => "windows",
            Stage::Topics => "topics",
            Stage::Features => "features",
            Stage::Models => "models",
            Stage::Eval => "eval",
            Stage::Explain => "explain",
            Stage::Write => "write",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{} stage failed: {source}", stage.as_str())]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

type StageResult<T> = std::result::Result<T, StageError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub window: usize,
    pub limit: i32,
    pub reads: usize,
    pub violations: usize,
    pub max_year: Option<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub window: usize,
    pub pattern: Pattern,
    pub reason: String,
}

/// Matrices and topic model for one window; stage outputs that later
/// stages consume.
pub struct WindowFeatures {
    pub window: WindowSpec,
    pub topic_model: TopicModel,
    pub coherence: Vec<f64>,
    pub matrices: Vec<(Pattern, FeatureMatrix, FeatureMatrix)>,
    pub skips: Vec<Skip>,
    pub audit: AuditRecord,
}

fn window_dir(out: &Path, w: usize) -> PathBuf {
    out.join("windows").join(format!("w{w:02}"))
}

fn pattern_seed(seed: u64, w: usize, p: Pattern) -> u64 {
    util::derive_path(seed, &[util::tag("window"), w as u64, util::tag(p.as_str())])
}

/// Labels, topics and features for one window. Every read made while
/// fitting topics and building features goes through an audit limited to
/// the input range's last year.
pub fn window_features(cfg: &PipelineConfig, corpus: &Corpus, window: WindowSpec) -> StageResult<(WindowFeatures, crate::windows::WindowData)> {
    let data = label_window(corpus, window);
    let audit = AccessAudit::new(corpus, window.input_range.end);
    let stopwords = default_stopwords();
    let docs = tokenize_records(audit.publications_in(window.input_range), &stopwords);
    let lda_seed = util::derive_path(cfg.seed, &[util::tag("lda"), window.index as u64]);
    let topic_model = fit_lda(&docs, cfg.lda.to_config(lda_seed)).at(Stage::Topics)?;
    let coh = coherence(&topic_model, &docs, 10);
    let g_in = build_graph_restricted(&audit, window.input_range, &data.actives);
    let disciplines = discipline_table(
        &topic_model,
        &audit,
        data.actives.iter().map(String::as_str),
        window.input_range,
    );
    let ctx = FeatureContext {
        g_in: &g_in,
        source: &audit,
        input_range: window.input_range,
        disciplines: &disciplines,
    };
    let mut matrices = Vec::new();
    let mut skips = Vec::new();
    for &pattern in &cfg.patterns {
        let set = data.set(pattern);
        let seed = pattern_seed(cfg.seed, window.index, pattern);
        let split = train_test_split(set, cfg.test_fraction, util::derive_seed(seed, util::tag("split")));
        let (train_set, test_set) = match split {
            Ok(s) => s,
            Err(e @ (Error::ClassTooSmall { .. } | Error::MissingClass(_))) => {
                skips.push(Skip {
                    window: window.index,
                    pattern,
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e).at(Stage::Windows),
        };
        let train_set = if cfg.undersample {
            undersample(&train_set, util::derive_seed(seed, util::tag("undersample"))).at(Stage::Windows)?
        } else {
            train_set
        };
        let train_m = build_feature_matrix(&train_set, &ctx).at(Stage::Features)?;
        let test_m = build_feature_matrix(&test_set, &ctx).at(Stage::Features)?;
        matrices.push((pattern, train_m, test_m));
    }
    let record = AuditRecord {
        window: window.index,
        limit: audit.limit(),
        reads: audit.reads(),
        violations: audit.violations(),
        max_year: audit.max_year(),
    };
    Ok((
        WindowFeatures {
            window,
            topic_model,
            coherence: coh,
            matrices,
            skips,
            audit: record,
        },
        data,
    ))
}

/// Everything produced for one (window, pattern, model).
pub struct ModelOutcome {
    pub window: usize,
    pub pattern: Pattern,
    pub kind: ModelKind,
    pub search: SearchResult,
    pub model: ModelFile,
    pub metrics: Metrics,
    pub shap: Vec<crate::explain::ShapRow>,
    pub summary: ShapSummary,
    /// Largest |base + Σ phi − raw score| over the explained rows.
    pub additivity_error: f64,
}

/// Random search on the training matrix, a final fit with the best
/// configuration, test evaluation and SHAP on the test rows.
pub fn fit_model(
    cfg: &PipelineConfig,
    window: usize,
    pattern: Pattern,
    kind: ModelKind,
    train_m: &FeatureMatrix,
    test_m: &FeatureMatrix,
) -> StageResult<ModelOutcome> {
    let seed = util::derive_seed(pattern_seed(cfg.seed, window, pattern), util::tag(kind.as_str()));
    let x = train_m.x();
    let y = train_m.labels();
    let search = random_search(&x, &y, &cfg.space_for(kind), cfg.n_trials, &cfg.cv(), seed).at(Stage::Models)?;
    let model = train(&search.best, &x, &y, util::derive_seed(seed, util::tag("final"))).at(Stage::Models)?;
    let metrics = evaluate(&model, test_m, cfg.threshold).at(Stage::Eval)?;
    let rows = match cfg.explain_rows {
        Some(n) if n < test_m.len() => FeatureMatrix {
            feature_names: test_m.feature_names.clone(),
            rows: test_m.rows[..n].to_vec(),
        },
        _ => test_m.clone(),
    };
    let shap = explain(&model, &rows, train_m).at(Stage::Explain)?;
    let mut additivity_error: f64 = 0.0;
    for (s, r) in shap.iter().zip(&rows.rows) {
        let raw = model.raw_score(&r.values).at(Stage::Explain)?;
        additivity_error = additivity_error.max((s.total() - raw).abs());
    }
    let summary = summarize(&shap, &rows).at(Stage::Explain)?;
    Ok(ModelOutcome {
        window,
        pattern,
        kind,
        model: ModelFile {
            feature_names: train_m.feature_names.clone(),
            hyper: search.best.clone(),
            model,
        },
        search,
        metrics,
        shap,
        summary,
        additivity_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: String,
    pub failing_stage: Option<Stage>,
    pub error: Option<String>,
    pub deviations: Vec<String>,
    pub windows: Vec<usize>,
    pub audits: Vec<AuditRecord>,
    pub skipped: Vec<Skip>,
    pub max_additivity_error: f64,
}

impl Manifest {
    fn new(cfg: &PipelineConfig) -> Manifest {
        Manifest {
            tool: "copattern".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            status: "running".into(),
            failing_stage: None,
            error: None,
            deviations: DEVIATIONS.iter().map(|s| s.to_string()).collect(),
            windows: Vec::new(),
            audits: Vec::new(),
            skipped: Vec::new(),
            max_additivity_error: 0.0,
        }
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_yearly_counts_csv(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["year", "publications"])?;
    for (year, n) in yearly_counts(corpus)? {
        w.write_record([year.to_string(), n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_coherence_csv(scores: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["topic", "umass"])?;
    for (k, s) in scores.iter().enumerate() {
        w.write_record([k.to_string(), fmt_sig(*s)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_cv_csv(search: &SearchResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["repeat".to_string(), "fold".to_string()];
    header.extend(CV_METRICS.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for f in &search.report.per_fold {
        let m = &f.metrics;
        let mut rec = vec![f.repeat.to_string(), f.fold.to_string()];
        rec.extend([m.recall, m.precision, m.f1, m.auc, m.ap].iter().map(|&v| fmt_sig(v)));
        w.write_record(&rec)?;
    }
    for (label, values) in [("mean", &search.report.mean), ("std", &search.report.std)] {
        let mut rec = vec![label.to_string(), String::new()];
        rec.extend(values.iter().map(|&v| fmt_sig(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trials_csv(search: &SearchResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "hyper", "mean_ap", "selected"])?;
    for (t, (h, ap)) in search.trials.iter().enumerate() {
        w.write_record([
            t.to_string(),
            serde_json::to_string(h)?,
            fmt_sig(*ap),
            u8::from(t == search.best_trial).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Summary of a finished run.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub reports: Vec<EvalReport>,
    pub summaries: Vec<(usize, Pattern, ModelKind, ShapSummary)>,
}

/// Runs every stage and writes the artifact tree under `cfg.out_dir`.
/// Nothing is written when the configuration is invalid. On a stage failure
/// the outputs so far are kept, a `failed/` directory records the reason and
/// the manifest names the stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> StageResult<RunOutcome> {
    cfg.validate().at(Stage::Config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))
        .at(Stage::Config)?;
    let report = load_corpus(&cfg.corpus, cfg.span).at(Stage::Corpus)?;
    let out = cfg.out_dir.as_path();
    create_dir(out).at(Stage::Write)?;
    let mut manifest = Manifest::new(cfg);
    let result = pool.install(|| run_stages(cfg, &report.corpus, &report.rejections, &mut manifest));
    match result {
        Ok((reports, summaries)) => {
            manifest.status = "ok".into();
            write_json(&manifest, &out.join("manifest.json")).at(Stage::Write)?;
            Ok(RunOutcome {
                manifest,
                reports,
                summaries,
            })
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.failing_stage = Some(e.stage);
            manifest.error = Some(e.source.to_string());
            let failed = out.join("failed");
            let _ = create_dir(&failed);
            let _ = fs::write(failed.join("reason.txt"), format!("{}\n{}\n", e.stage.as_str(), e.source));
            let _ = write_json(&manifest, &out.join("manifest.json"));
            Err(e)
        }
    }
}

type StagesOutput = (Vec<EvalReport>, Vec<(usize, Pattern, ModelKind, ShapSummary)>);

fn run_stages(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    rejections: &[crate::corpus::Rejection],
    manifest: &mut Manifest,
) -> StageResult<StagesOutput> {
    let out = cfg.out_dir.as_path();
    write_json(cfg, &out.join("config.json")).at(Stage::Write)?;
    write_rejections(rejections, out.join("rejections.csv")).at(Stage::Write)?;
    write_yearly_counts_csv(corpus, out.join("publications_per_year.csv")).at(Stage::Write)?;
    let windows = cfg.selected_windows().at(Stage::Windows)?;
    manifest.windows = windows.iter().map(|w| w.index).collect();
    log::info!("{} publications, {} windows", corpus.len(), windows.len());

    let prepared: Vec<WindowFeatures> = windows
        .par_iter()
        .map(|&w| {
            let (wf, data) = window_features(cfg, corpus, w)?;
            let dir = window_dir(out, w.index);
            create_dir(&dir).at(Stage::Write)?;
            let sets: Vec<_> = cfg.patterns.iter().map(|&p| data.set(p)).collect();
            write_labels_csv(sets, dir.join("labels.csv")).at(Stage::Write)?;
            wf.topic_model.write_top_words_csv(10, dir.join("topic_top_words.csv")).at(Stage::Write)?;
            write_coherence_csv(&wf.coherence, dir.join("topic_coherence.csv")).at(Stage::Write)?;
            for (p, train_m, test_m) in &wf.matrices {
                let pdir = dir.join(p.as_str());
                create_dir(&pdir).at(Stage::Write)?;
                train_m.write_csv(pdir.join("features_train.csv")).at(Stage::Write)?;
                test_m.write_csv(pdir.join("features_test.csv")).at(Stage::Write)?;
            }
            log::info!("window {} prepared: {} reads audited", w.index, wf.audit.reads);
            Ok(wf)
        })
        .collect::<StageResult<_>>()?;
    for wf in &prepared {
        manifest.audits.push(wf.audit.clone());
        manifest.skipped.extend(wf.skips.iter().cloned());
    }

    let units: Vec<(usize, Pattern, ModelKind, &FeatureMatrix, &FeatureMatrix)> = prepared
        .iter()
        .flat_map(|wf| {
            wf.matrices.iter().flat_map(move |(p, tr, te)| {
                cfg.models.iter().map(move |&k| (wf.window.index, *p, k, tr, te))
            })
        })
        .collect();
    let outcomes: Vec<ModelOutcome> = units
        .par_iter()
        .map(|&(w, p, k, tr, te)| {
            let o = fit_model(cfg, w, p, k, tr, te)?;
            let dir = window_dir(out, w).join(p.as_str()).join(k.as_str());
            create_dir(&dir).at(Stage::Write)?;
            o.model.write_json(dir.join("model.json")).at(Stage::Write)?;
            write_cv_csv(&o.search, dir.join("cv.csv")).at(Stage::Write)?;
            write_trials_csv(&o.search, dir.join("search_trials.csv")).at(Stage::Write)?;
            write_shap_csv(&o.shap, &te.feature_names, dir.join("shap.csv")).at(Stage::Write)?;
            write_summary_csv(&o.summary, dir.join("shap_summary.csv")).at(Stage::Write)?;
            log::info!("window {w} {p} {k}: test auc {:.3} ap {:.3}", o.metrics.auc, o.metrics.ap);
            Ok(o)
        })
        .collect::<StageResult<_>>()?;

    let reports: Vec<EvalReport> = outcomes
        .iter()
        .map(|o| EvalReport {
            window: o.window,
            pattern: o.pattern,
            model: o.kind.as_str().to_string(),
            metrics: o.metrics,
        })
        .collect();
    manifest.max_additivity_error = outcomes.iter().map(|o| o.additivity_error).fold(0.0, f64::max);
    write_report_csv(&reports, out.join("eval_report.csv")).at(Stage::Write)?;
    for &p in &cfg.patterns {
        write_plot_csv(&reports, p, out.join(format!("plot_ap_{p}.csv"))).at(Stage::Write)?;
    }
    write_importance_csv(&outcomes, out.join("shap_importance.csv")).at(Stage::Write)?;
    let summaries = outcomes
        .into_iter()
        .map(|o| (o.window, o.pattern, o.kind, o.summary))
        .collect();
    Ok((reports, summaries))
}

/// One row per (window, pattern, model, feature): importance, direction, rank.
fn write_importance_csv(outcomes: &[ModelOutcome], path: PathBuf) -> Result<()> {
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["window", "pattern", "model", "feature", "importance", "direction", "rank"])?;
    let mut ordered: BTreeMap<(usize, &str, &str), &ShapSummary> = BTreeMap::new();
    for o in outcomes {
        ordered.insert((o.window, o.pattern.as_str(), o.kind.as_str()), &o.summary);
    }
    for ((window, pattern, model), s) in ordered {
        for e in &s.entries {
            w.write_record([
                window.to_string(),
                pattern.to_string(),
                model.to_string(),
                e.feature.clone(),
                fmt_sig(e.importance),
                e.direction.to_string(),
                e.rank.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
