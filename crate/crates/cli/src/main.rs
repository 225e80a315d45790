use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use copattern::corpus::{load_corpus, write_jsonl, YearRange};
use copattern::eval::{evaluate, Metrics};
use copattern::explain::{explain, summarize, write_shap_csv, write_summary_csv};
use copattern::models::{random_search, train, ModelFile, ModelKind};
use copattern::pipeline::{
    run_pipeline, window_features, write_coherence_csv, write_cv_csv, write_trials_csv, write_yearly_counts_csv,
    PipelineConfig, Stage, StageError,
};
use copattern::synth::{generate, SynthConfig};
use copattern::util::{self, fmt_sig};
use copattern::windows::{label_window, write_labels_csv};
use copattern::{Error, FeatureMatrix};

#[derive(Parser, Debug)]
#[command(name = "copattern", version, about = "Predict and explain temporal co-authorship patterns")]
struct Cli {
    /// JSON pipeline (or, for `synth`, generator) configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "COPATTERN_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "COPATTERN_OUT")]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Publications per year.
    Stats(CorpusArgs),
    /// Generate a synthetic corpus and its ground-truth sidecar.
    Synth,
    /// Label every selected window and write the pair sets.
    Windows,
    /// Fit topics and write train/test feature matrices per window and pattern.
    Features,
    /// Random search and a final fit on a persisted training matrix.
    Train(TrainArgs),
    /// Score a persisted model on a feature matrix.
    Evaluate(EvalArgs),
    /// SHAP attributions for a persisted model.
    Explain(ExplainArgs),
    /// Run every stage end to end.
    Pipeline,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Corpus file; taken from --config when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Inclusive year span, e.g. 2000-2017.
    #[arg(long, value_parser = parse_span)]
    span: Option<YearRange>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training feature matrix CSV.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: ModelKind,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Background matrix for linear models; defaults to --features.
    #[arg(long)]
    background: Option<PathBuf>,
}

fn parse_span(s: &str) -> Result<YearRange, String> {
    let (a, b) = s.split_once('-').ok_or("expected START-END")?;
    let start = a.trim().parse().map_err(|e| format!("{e}"))?;
    let end = b.trim().parse().map_err(|e| format!("{e}"))?;
    YearRange::new(start, end).map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

const CONFIG_ERROR: u8 = 2;
const DATA_ERROR: u8 = 3;
const STAGE_FAILURE: u8 = 4;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => CONFIG_ERROR,
            Error::Parse { .. }
            | Error::DuplicatePubId(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_)
            | Error::FeatureMismatch(_)
            | Error::InvalidModel(_)
            | Error::Empty(_)
            | Error::Arity { .. } => DATA_ERROR,
            _ => STAGE_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        let code = match e.stage {
            Stage::Config => CONFIG_ERROR,
            Stage::Corpus => DATA_ERROR,
            _ => STAGE_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.workers {
        rayon_workers(n)?;
    }
    match &cli.command {
        Command::Stats(args) => cmd_stats(&cli, args),
        Command::Synth => cmd_synth(&cli),
        Command::Windows => cmd_windows(&cli),
        Command::Features => cmd_features(&cli),
        Command::Train(args) => cmd_train(&cli, args),
        Command::Evaluate(args) => cmd_evaluate(&cli, args),
        Command::Explain(args) => cmd_explain(&cli, args),
        Command::Pipeline => cmd_pipeline(&cli),
    }
}

fn rayon_workers(n: usize) -> CliResult {
    if n == 0 {
        return Err(Error::Config("--workers must be positive".into()).into());
    }
    // the pipeline builds its own pool; this bounds every other command
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()).into())
}

/// Loads the pipeline config (defaults without --config), resolves a
/// relative corpus path against the config file's directory and applies
/// the command-line overrides.
fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let mut cfg = PipelineConfig::from_json_file(path)?;
            if cfg.corpus.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.corpus = dir.join(&cfg.corpus);
                }
            }
            cfg
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

fn cmd_stats(cli: &Cli, args: &CorpusArgs) -> CliResult {
    let (corpus_path, span) = match (&args.corpus, &cli.config) {
        (Some(p), _) => (p.clone(), args.span.unwrap_or_default()),
        (None, Some(_)) => {
            let cfg = load_config(cli)?;
            (cfg.corpus, args.span.unwrap_or(cfg.span))
        }
        (None, None) => return Err(Error::Config("stats needs --corpus or --config".into()).into()),
    };
    let report = load_corpus(&corpus_path, span)?;
    let out = out_dir(cli);
    create_dir(&out)?;
    write_yearly_counts_csv(&report.corpus, out.join("publications_per_year.csv"))?;
    if !report.rejections.is_empty() {
        copattern::corpus::write_rejections(&report.rejections, out.join("rejections.csv"))?;
        log::warn!("{} records rejected", report.rejections.len());
    }
    println!("{} publications written to {}", report.corpus.len(), out.display());
    Ok(())
}

fn cmd_synth(cli: &Cli) -> CliResult {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let (corpus, truth) = generate(&cfg)?;
    let out = out_dir(cli);
    create_dir(&out)?;
    write_jsonl(&corpus, out.join("corpus.jsonl"))?;
    truth.write_json(out.join("ground_truth.json"))?;
    println!("{} publications written to {}", corpus.len(), out.display());
    Ok(())
}

fn window_dir(out: &Path, w: usize) -> PathBuf {
    out.join("windows").join(format!("w{w:02}"))
}

fn cmd_windows(cli: &Cli) -> CliResult {
    let cfg = load_config(cli)?;
    let corpus = load_corpus(&cfg.corpus, cfg.span)?.corpus;
    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    let mut w = csv_writer(&out.join("windows.csv"))?;
    w.write_record([
        "window", "input", "prediction", "active", "pattern", "candidates", "positives", "negatives",
    ])
    .map_err(Error::from)?;
    for spec in cfg.selected_windows()? {
        let data = label_window(&corpus, spec);
        let dir = window_dir(&out, spec.index);
        create_dir(&dir)?;
        let sets: Vec<_> = cfg.patterns.iter().map(|&p| data.set(p)).collect();
        write_labels_csv(sets.iter().copied(), dir.join("labels.csv"))?;
        for set in sets {
            let (neg, pos) = set.class_counts();
            w.write_record([
                spec.index.to_string(),
                spec.input_range.to_string(),
                spec.prediction_range.to_string(),
                data.actives.len().to_string(),
                set.pattern.to_string(),
                set.len().to_string(),
                pos.to_string(),
                neg.to_string(),
            ])
            .map_err(Error::from)?;
        }
    }
    w.flush().map_err(|e| Error::io(out.join("windows.csv"), e))?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, Failure> {
    Ok(csv::Writer::from_path(path).map_err(Error::from)?)
}

fn cmd_features(cli: &Cli) -> CliResult {
    let cfg = load_config(cli)?;
    let corpus = load_corpus(&cfg.corpus, cfg.span)
        .map_err(|source| StageError {
            stage: Stage::Corpus,
            source,
        })?
        .corpus;
    let out = cfg.out_dir.clone();
    for spec in cfg.selected_windows()? {
        let (wf, _) = window_features(&cfg, &corpus, spec)?;
        let dir = window_dir(&out, spec.index);
        create_dir(&dir)?;
        wf.topic_model.write_json(dir.join("topic_model.json"))?;
        wf.topic_model.write_top_words_csv(10, dir.join("topic_top_words.csv"))?;
        write_coherence_csv(&wf.coherence, dir.join("topic_coherence.csv"))?;
        for (p, train_m, test_m) in &wf.matrices {
            let pdir = dir.join(p.as_str());
            create_dir(&pdir)?;
            train_m.write_csv(pdir.join("features_train.csv"))?;
            test_m.write_csv(pdir.join("features_test.csv"))?;
        }
        for s in &wf.skips {
            log::warn!("window {} {} skipped: {}", s.window, s.pattern, s.reason);
        }
        if wf.audit.violations > 0 {
            return Err(Failure {
                code: STAGE_FAILURE,
                message: format!("window {}: {} prediction-window reads", spec.index, wf.audit.violations),
            });
        }
    }
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> CliResult {
    let cfg = load_config(cli)?;
    let m = FeatureMatrix::read_csv(&args.features)?;
    let (x, y) = (m.x(), m.labels());
    let seed = util::derive_seed(cfg.seed, util::tag(args.kind.as_str()));
    let search = random_search(&x, &y, &cfg.space_for(args.kind), cfg.n_trials, &cfg.cv(), seed)?;
    let model = train(&search.best, &x, &y, util::derive_seed(seed, util::tag("final")))?;
    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    let file = ModelFile {
        feature_names: m.feature_names.clone(),
        hyper: search.best.clone(),
        model,
    };
    file.write_json(out.join("model.json"))?;
    write_cv_csv(&search, out.join("cv.csv"))?;
    write_trials_csv(&search, out.join("search_trials.csv"))?;
    println!(
        "{}: best trial {} mean CV ap {}",
        args.kind,
        search.best_trial,
        fmt_sig(search.report.mean_of("ap").unwrap_or(f64::NAN))
    );
    Ok(())
}

fn load_pair(model: &Path, features: &Path) -> Result<(ModelFile, FeatureMatrix), Failure> {
    let mf = ModelFile::read_json(model)?;
    let m = FeatureMatrix::read_csv(features)?;
    m.check_names(&mf.feature_names)?;
    if m.is_empty() {
        return Err(Error::Empty("feature matrix").into());
    }
    Ok((mf, m))
}

fn write_metrics(m: &Metrics, path: &Path) -> CliResult {
    let mut w = csv_writer(path)?;
    w.write_record(["metric", "value"]).map_err(Error::from)?;
    let rows = [
        ("threshold", fmt_sig(m.threshold)),
        ("recall", fmt_sig(m.recall)),
        ("precision", fmt_sig(m.precision)),
        ("f1", fmt_sig(m.f1)),
        ("auc", fmt_sig(m.auc)),
        ("ap", fmt_sig(m.ap)),
        ("prevalence", fmt_sig(m.prevalence)),
        ("tp", m.tp.to_string()),
        ("fp", m.fp.to_string()),
        ("tn", m.tn.to_string()),
        ("fn", m.fn_.to_string()),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()]).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn cmd_evaluate(cli: &Cli, args: &EvalArgs) -> CliResult {
    let (mf, m) = load_pair(&args.model, &args.features)?;
    let metrics = evaluate(&mf.model, &m, args.threshold)?;
    let out = out_dir(cli);
    create_dir(&out)?;
    write_metrics(&metrics, &out.join("evaluation.csv"))?;
    println!(
        "auc {} ap {} prevalence {} recall {} precision {}",
        fmt_sig(metrics.auc),
        fmt_sig(metrics.ap),
        fmt_sig(metrics.prevalence),
        fmt_sig(metrics.recall),
        fmt_sig(metrics.precision)
    );
    Ok(())
}

fn cmd_explain(cli: &Cli, args: &ExplainArgs) -> CliResult {
    let (mf, m) = load_pair(&args.model, &args.features)?;
    let background = match &args.background {
        Some(p) => {
            let b = FeatureMatrix::read_csv(p)?;
            b.check_names(&mf.feature_names)?;
            b
        }
        None => m.clone(),
    };
    let rows = explain(&mf.model, &m, &background)?;
    let summary = summarize(&rows, &m)?;
    let out = out_dir(cli);
    create_dir(&out)?;
    write_shap_csv(&rows, &m.feature_names, out.join("shap.csv"))?;
    write_summary_csv(&summary, out.join("shap_summary.csv"))?;
    for e in summary.entries.iter().take(5) {
        println!("{:>2} {:<20} {} {:+}", e.rank, e.feature, fmt_sig(e.importance), e.direction);
    }
    Ok(())
}

fn cmd_pipeline(cli: &Cli) -> CliResult {
    let cfg = load_config(cli)?;
    let outcome = run_pipeline(&cfg)?;
    println!(
        "{} evaluations over {} windows written to {}",
        outcome.reports.len(),
        outcome.manifest.windows.len(),
        cfg.out_dir.display()
    );
    Ok(())
}
