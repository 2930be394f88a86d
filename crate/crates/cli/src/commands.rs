use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use ttt_core::analysis::{run_analysis, AnalysisOptions, AnalysisReport, DiscriminatorConfig, TURING_LABELS};
use ttt_core::corpus::{load_corpus, select_experiment_subset, Corpus, CorpusFormat, ExperimentSubset, Review, Sentiment, Split};
use ttt_core::explain::{
    explain_reviews, read_explanations, relevance_covariance, word_set_comparison, write_explanations, ExplainOptions,
    Explanation, Ranking,
};
use ttt_core::protocol::{
    read_event_log, simulate_participants, BotCheckConfig, ExperimentMaterials, ExperimentService, ExperimentState,
    FileEventLog, JudgingStrategy, LogicalClock, ProtocolConfig, SimulatedAnnotator, SystemClock, WordMarking,
    EVENT_LOG_FILE,
};
use ttt_core::report::{read_report, write_report, ReportFormat};
use ttt_core::synth::{SynthConfig, SyntheticExperiment};
use ttt_core::text_model::{evaluate, grid_search, render_rows, LearningRate, LinearModel, TrainConfig, SENTIMENT_LABELS};

use crate::args::*;
use crate::manifest::{fingerprint, manifest_path, write_manifest, InputFingerprint, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Bad flags, missing or unreadable inputs.
    Input,
    /// Inputs that are readable but unusable.
    Data,
    /// Failures while writing outputs or serving.
    Runtime,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Input => 3,
            Category::Data => 4,
            Category::Runtime => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Input => "input error",
            Category::Data => "data error",
            Category::Runtime => "runtime error",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub category: Category,
    pub error: anyhow::Error,
}

trait Categorize<T> {
    fn input(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Categorize<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            category: Category::Input,
            error: e.into(),
        })
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            category: Category::Data,
            error: e.into(),
        })
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            category: Category::Runtime,
            error: e.into(),
        })
    }
}

type CmdResult = Result<(), Failure>;

fn require_inputs(paths: &[&Path]) -> CmdResult {
    for path in paths {
        if !path.exists() {
            return Err(anyhow!("input {} does not exist", path.display())).input();
        }
    }
    Ok(())
}

fn fingerprints(paths: &[&Path]) -> Result<Vec<InputFingerprint>, Failure> {
    paths
        .iter()
        .map(|p| fingerprint(p).with_context(|| format!("fingerprinting {}", p.display())))
        .collect::<Result<_, _>>()
        .input()
}

fn finish<C: Serialize>(
    command: &'static str,
    config: &C,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<InputFingerprint>,
    outputs: &[&Path],
    manifest_at: PathBuf,
) -> CmdResult {
    let manifest = Manifest {
        tool: "ttt",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        seeds,
        inputs,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_manifest(&manifest_at, &manifest)
        .with_context(|| format!("writing {}", manifest_at.display()))
        .runtime()
}

fn seeds(master: u64) -> BTreeMap<String, u64> {
    BTreeMap::from([("master".to_string(), master)])
}

fn load(args: &CorpusArgs) -> Result<Corpus, Failure> {
    let format = match args.corpus_format {
        CorpusFormatArg::Auto => CorpusFormat::detect(&args.corpus),
        CorpusFormatArg::Directory => CorpusFormat::DirectoryPerClass,
        CorpusFormatArg::Lines => CorpusFormat::RecordLines,
    };
    load_corpus(&args.corpus, format).input()
}

fn load_model(path: &Path) -> Result<LinearModel<f64>, Failure> {
    LinearModel::load(path).input()
}

fn ensure_parent(path: &Path) -> CmdResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .runtime(),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut json = serde_json::to_vec_pretty(value).expect("serializable");
    json.push(b'\n');
    fs::write(path, json).with_context(|| format!("writing {}", path.display())).runtime()
}

#[derive(Serialize)]
struct TrainReport<'a> {
    lambda: f64,
    candidates: &'a [ttt_core::text_model::CandidateScore],
    train_reviews: usize,
    test_reviews: usize,
    test: Option<ttt_core::EvalMetrics>,
}

pub fn train(args: &TrainArgs) -> CmdResult {
    require_inputs(&[&args.corpus.corpus])?;
    let config = TrainConfig {
        learning_rate: LearningRate::InverseScaling { eta0: args.eta0 },
        epochs: args.epochs,
        lambda_grid: args.lambdas.clone().unwrap_or_else(|| TrainConfig::default().lambda_grid),
        validation_fraction: args.validation_fraction,
        seed: args.seed.seed,
    };
    config.validate().input()?;
    let inputs = fingerprints(&[&args.corpus.corpus])?;
    let corpus = load(&args.corpus)?;
    let train = corpus.split(Split::Train);
    let test = corpus.split(Split::Test);
    let trained = grid_search::<f64>(&train, &config).data()?;
    ensure_parent(&args.out)?;
    trained.model.save(&args.out).runtime()?;

    let metrics = (!test.is_empty()).then(|| evaluate(&trained.model, &test));
    if let Some(m) = &metrics {
        print!("{}", render_rows(&m.rows(&SENTIMENT_LABELS)));
    }
    println!("lambda = {}", trained.model.lambda());
    let report = TrainReport {
        lambda: trained.model.lambda(),
        candidates: &trained.candidates,
        train_reviews: train.len(),
        test_reviews: test.len(),
        test: metrics,
    };
    let metrics_path = manifest_path(&args.out, false).with_file_name(format!(
        "{}.metrics.json",
        args.out.file_name().unwrap_or_default().to_string_lossy()
    ));
    write_json(&metrics_path, &report)?;
    finish(
        "train",
        args,
        seeds(config.seed),
        inputs,
        &[&args.out, &metrics_path],
        manifest_path(&args.out, false),
    )
}

pub fn select_subset(args: &SelectSubsetArgs) -> CmdResult {
    require_inputs(&[&args.corpus.corpus, &args.model])?;
    let inputs = fingerprints(&[&args.corpus.corpus, &args.model])?;
    let corpus = load(&args.corpus)?;
    let model = load_model(&args.model)?;
    let subset = select_experiment_subset(&corpus, &model, args.target_accuracy, args.size, args.seed.seed).data()?;
    let reevaluated = subset
        .reviews
        .iter()
        .filter(|r| model.predict_text(&r.text) == r.label)
        .count();
    println!("{} reviews, model correct on {reevaluated} ({})", subset.len(), subset.accuracy());
    ensure_parent(&args.out)?;
    subset.save(&args.out).runtime()?;
    finish(
        "select-subset",
        args,
        seeds(args.seed.seed),
        inputs,
        &[&args.out],
        manifest_path(&args.out, false),
    )
}

pub fn explain(args: &ExplainArgs) -> CmdResult {
    require_inputs(&[&args.corpus.corpus, &args.model, &args.subset])?;
    let inputs = fingerprints(&[&args.corpus.corpus, &args.model, &args.subset])?;
    let corpus = load(&args.corpus)?;
    let model = load_model(&args.model)?;
    let subset = ExperimentSubset::load(&args.subset).input()?;
    let relevance = relevance_covariance(&model, &corpus.split(Split::Train)).data()?;
    let options = ExplainOptions {
        k: args.k,
        ranking: match args.ranking {
            RankingArg::Signed => Ranking::Signed,
            RankingArg::Absolute => Ranking::Absolute,
        },
    };
    let reviews: Vec<&Review> = subset.reviews.iter().collect();
    let (explanations, excluded) = explain_reviews(&model, &relevance, &reviews, options);
    if !excluded.is_empty() {
        let reasons: Vec<String> = excluded.iter().map(ToString::to_string).collect();
        return Err(anyhow!("{} reviews cannot be explained: {}", excluded.len(), reasons.join("; "))).data();
    }
    ensure_parent(&args.out)?;
    write_explanations(&args.out, &explanations).runtime()?;
    println!("{} explanations written to {}", explanations.len(), args.out.display());
    finish("explain", args, BTreeMap::new(), inputs, &[&args.out], manifest_path(&args.out, false))
}

fn human_explanations(state: &ExperimentState) -> Vec<Explanation> {
    state.human_pool.values().flatten().cloned().collect()
}

pub fn compare_words(args: &CompareWordsArgs) -> CmdResult {
    let log = args.log_dir.join(EVENT_LOG_FILE);
    require_inputs(&[&log, &args.explanations])?;
    let inputs = fingerprints(&[&log, &args.explanations])?;
    let events = read_event_log(&args.log_dir).input()?;
    let state = ExperimentState::replay(&events).data()?;
    let machine = read_explanations(&args.explanations).input()?;
    let human = human_explanations(&state);
    let classes = match args.class {
        Some(SentimentArg::Positive) => vec![Sentiment::Positive],
        Some(SentimentArg::Negative) => vec![Sentiment::Negative],
        None => vec![Sentiment::Positive, Sentiment::Negative],
    };
    let comparisons: Vec<_> = classes
        .into_iter()
        .map(|class| word_set_comparison(&human, &machine, class, args.seed.seed))
        .collect();
    for c in &comparisons {
        let [h, m, s] = c.sample(args.n, args.seed.seed);
        println!("{} (pool {}):", c.class, c.pool_size);
        println!("  human only:   {}", h.join(", "));
        println!("  machine only: {}", m.join(", "));
        println!("  shared:       {}", s.join(", "));
    }
    let mut outputs = Vec::new();
    if let Some(out) = &args.out {
        ensure_parent(out)?;
        write_json(out, &comparisons)?;
        outputs.push(out.as_path());
    }
    let manifest_at = match &args.out {
        Some(out) => manifest_path(out, false),
        None => args.log_dir.join("compare-words.manifest.json"),
    };
    finish("compare-words", args, seeds(args.seed.seed), inputs, &outputs, manifest_at)
}

fn protocol_config(args: &ProtocolArgs, seed: u64) -> Result<ProtocolConfig, Failure> {
    let bot_check = match &args.bot_check {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .input()?;
            serde_json::from_str::<BotCheckConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .input()?
        }
        None => BotCheckConfig::default(),
    };
    Ok(ProtocolConfig {
        bot_check,
        annotations_per_participant: args.annotations,
        judgments_per_participant: args.judgments,
        human_stimulus_probability: args.human_probability,
        seed,
    })
}

fn file_materials(subset: &Path, explanations: &Path) -> Result<ExperimentMaterials, Failure> {
    let subset = ExperimentSubset::load(subset).input()?;
    let explanations = read_explanations(explanations).input()?;
    ExperimentMaterials::from_subset(&subset, explanations).data()
}

fn existing_events(log_dir: &Path) -> Result<Vec<ttt_core::protocol::ExperimentEvent>, Failure> {
    if log_dir.join(EVENT_LOG_FILE).exists() {
        read_event_log(log_dir).input()
    } else {
        Ok(Vec::new())
    }
}

pub fn serve(args: &ServeArgs) -> CmdResult {
    require_inputs(&[&args.subset, &args.model, &args.explanations])?;
    let inputs = fingerprints(&[&args.subset, &args.model, &args.explanations])?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("invalid address {}:{}", args.host, args.port))
        .input()?;
    let config = protocol_config(&args.protocol, args.seed.seed)?;
    let materials = file_materials(&args.subset, &args.explanations)?;
    let model = load_model(&args.model)?;
    for review in materials.reviews() {
        let explanation = materials.machine_explanation(&review.id).expect("validated");
        if model.predict_text(&review.text) != explanation.predicted_label {
            return Err(anyhow!("explanation for {} was not produced by this model", review.id)).data();
        }
    }
    let events = existing_events(&args.log_dir)?;
    let store = FileEventLog::open(&args.log_dir).runtime()?;
    let service = ExperimentService::resume(config, materials, &events, store, Box::new(SystemClock)).data()?;
    finish(
        "serve",
        args,
        seeds(args.seed.seed),
        inputs,
        &[&args.log_dir],
        manifest_path(&args.log_dir, true),
    )?;
    let app = ttt_server::router(ttt_server::shared(service), args.static_dir.clone());
    println!("listening on http://{addr} ({} events replayed)", events.len());
    let runtime = tokio::runtime::Runtime::new().runtime()?;
    runtime.block_on(ttt_server::serve(addr, app)).runtime()
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let seed = args.seed.seed;
    if !existing_events(&args.log_dir)?.is_empty() {
        return Err(anyhow!("{} already contains events", args.log_dir.display())).input();
    }
    let config = protocol_config(&args.protocol, seed)?;
    let mut seeds = seeds(seed);
    let (materials, inputs) = match (&args.subset, &args.explanations) {
        (Some(subset), Some(explanations)) => {
            require_inputs(&[subset, explanations])?;
            (file_materials(subset, explanations)?, fingerprints(&[subset, explanations])?)
        }
        _ => {
            let synth = SynthConfig {
                seed,
                ..SynthConfig::default()
            };
            seeds.insert("synthetic-corpus".into(), seed);
            let experiment = SyntheticExperiment::build(synth, seed).map_err(|e| anyhow!(e)).data()?;
            fs::create_dir_all(&args.log_dir).runtime()?;
            experiment.subset.save(&args.log_dir.join("subset.json")).runtime()?;
            write_explanations(&args.log_dir.join("explanations.jsonl"), &experiment.explanations).runtime()?;
            experiment.model.save(&args.log_dir.join("model.json")).runtime()?;
            (experiment.materials(), Vec::new())
        }
    };
    let mut annotator = match args.annotator {
        AnnotatorArg::Chance => SimulatedAnnotator::chance_guesser(),
        AnnotatorArg::Perfect => SimulatedAnnotator::perfect(),
        AnnotatorArg::MachineLike => SimulatedAnnotator {
            marking: WordMarking::MachineLike,
            ..SimulatedAnnotator::chance_guesser()
        },
    };
    annotator.judging = match args.judging {
        JudgingArg::Chance => JudgingStrategy::Chance,
        JudgingArg::AlwaysHuman => JudgingStrategy::AlwaysHuman,
        JudgingArg::AlwaysMachine => JudgingStrategy::AlwaysMachine,
    };
    annotator.bot_pass_probability = args.bot_pass_probability;
    if !(0.0..=1.0).contains(&args.bot_pass_probability) {
        return Err(anyhow!("bot pass probability outside [0, 1]")).input();
    }
    let store = FileEventLog::open(&args.log_dir).runtime()?;
    let mut service = ExperimentService::new(config, materials, store, Box::new(LogicalClock::default())).data()?;
    let summary = simulate_participants(&mut service, args.n, &annotator, seed).runtime()?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    let log = service.store().path().to_path_buf();
    finish(
        "simulate",
        args,
        seeds,
        inputs,
        &[&log],
        manifest_path(&args.log_dir, true),
    )
}

fn print_summary(report: &AnalysisReport) {
    println!(
        "subjects: {} before filtering, {} retained (annotation accuracy >= {})",
        report.filter.before, report.filter.after, report.filter.min_accuracy
    );
    print!("{}", render_rows(&report.metrics.rows(&TURING_LABELS)));
    println!(
        "mean subject accuracy {:.3} over {} subjects",
        report.histogram.mean,
        report.histogram.subjects.len()
    );
    match &report.correlations {
        Ok(c) => println!(
            "correlation by subject: {}, by review: {}",
            c.by_subject.r.map_or("undefined".into(), |r| format!("{r:.3}")),
            c.by_review.r.map_or("undefined".into(), |r| format!("{r:.3}"))
        ),
        Err(e) => println!("correlations: {e}"),
    }
    match &report.learning_curves {
        Ok(curves) => {
            for c in curves {
                println!(
                    "size {:>3}: q10 {:.3} q50 {:.3} q90 {:.3} p {:.3e}{}",
                    c.size,
                    c.q10,
                    c.q50,
                    c.q90,
                    c.p_value,
                    if c.significant { " *" } else { "" }
                );
            }
        }
        Err(e) => println!("learning curves: {e}"),
    }
}

fn report_format(format: FormatArg) -> ReportFormat {
    match format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    }
}

pub fn analyze(args: &AnalyzeArgs) -> CmdResult {
    let log = args.log_dir.join(EVENT_LOG_FILE);
    let mut paths: Vec<&Path> = vec![&log];
    if let Some(m) = &args.model {
        paths.push(m);
    }
    require_inputs(&paths)?;
    let inputs = fingerprints(&paths)?;
    let events = read_event_log(&args.log_dir).input()?;
    let lambda = match (args.lambda, &args.model) {
        (Some(l), _) => l,
        (None, Some(path)) => load_model(path)?.lambda(),
        (None, None) => DiscriminatorConfig::default().lambda,
    };
    let options = AnalysisOptions {
        min_accuracy: args.min_accuracy,
        discriminator: DiscriminatorConfig {
            sizes: args.sizes.clone(),
            models_per_size: args.models_per_size,
            holdout_fraction: args.holdout_fraction,
            lambda,
            alpha: args.alpha,
            seed: args.seed.seed,
            ..DiscriminatorConfig::default()
        },
    };
    let report = run_analysis(&events, &options).data()?;
    print_summary(&report);
    write_report(&report, &args.out, report_format(args.format)).runtime()?;
    finish(
        "analyze",
        args,
        seeds(args.seed.seed),
        inputs,
        &[&args.out],
        manifest_path(&args.out, true),
    )
}

pub fn report(args: &ReportArgs) -> CmdResult {
    require_inputs(&[&args.input])?;
    let inputs = fingerprints(&[&args.input])?;
    let report = read_report(&args.input).input()?;
    print_summary(&report);
    write_report(&report, &args.out, report_format(args.format)).runtime()?;
    finish("report", args, BTreeMap::new(), inputs, &[&args.out], manifest_path(&args.out, true))
}
