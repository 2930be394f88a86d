use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ttt", version, about = "Turing test for machine-generated explanations")]
pub struct Cli {
    /// JSON file with per-subcommand defaults, e.g. {"train": {"epochs": 5}}.
    /// Command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the TF-IDF logistic regression sentiment model.
    Train(TrainArgs),
    /// Pick the experiment reviews at a fixed model accuracy.
    SelectSubset(SelectSubsetArgs),
    /// Compute the model's three-word explanations for the subset.
    Explain(ExplainArgs),
    /// Compare human and machine explanation vocabularies per class.
    CompareWords(CompareWordsArgs),
    /// Run the experiment HTTP API.
    Serve(ServeArgs),
    /// Drive simulated participants through the experiment.
    Simulate(SimulateArgs),
    /// Analyze an event log and write the report bundle.
    Analyze(AnalyzeArgs),
    /// Re-render a report bundle from its report.json.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormatArg {
    Auto,
    Directory,
    Lines,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RankingArg {
    Signed,
    Absolute,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SentimentArg {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotatorArg {
    /// Random words, labels right with 40-100% accuracy, coin-flip judgments.
    Chance,
    /// Always labels correctly; otherwise like `chance`.
    Perfect,
    /// Marks the model's own explanation words.
    MachineLike,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum JudgingArg {
    Chance,
    AlwaysHuman,
    AlwaysMachine,
}

#[derive(Debug, Args, Serialize)]
pub struct SeedArg {
    /// Master seed for every random choice of the run.
    #[arg(long, env = "TTT_SEED")]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusArgs {
    /// Review corpus: a train/test directory tree with pos/neg folders, or
    /// a record-lines file.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub corpus_format: CorpusFormatArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ProtocolArgs {
    #[arg(long, default_value_t = 5)]
    pub annotations: usize,
    #[arg(long, default_value_t = 5)]
    pub judgments: usize,
    /// Probability of a human stimulus when one is available.
    #[arg(long, default_value_t = 0.5)]
    pub human_probability: f64,
    /// JSON file with {"question", "options": [3], "correct_index"}.
    #[arg(long)]
    pub bot_check: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eta0: f64,
    /// Regularization grid; defaults to 1e-6 through 1e2.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SelectSubsetArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub size: usize,
    #[arg(long, default_value_t = 0.8)]
    pub target_accuracy: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ExplainArgs {
    /// Corpus whose train split defines the relevance covariances.
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub subset: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "signed")]
    pub ranking: RankingArg,
    /// Explanations file to write (one record per line).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct CompareWordsArgs {
    #[arg(long)]
    pub log_dir: PathBuf,
    #[arg(long)]
    pub explanations: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Only this class; both when omitted.
    #[arg(long, value_enum)]
    pub class: Option<SentimentArg>,
    /// Words shown per set.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Write the full comparison here as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub subset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub explanations: PathBuf,
    #[arg(long)]
    pub log_dir: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Directory with the participant web interface.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 145)]
    pub n: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Experiment subset; a synthetic experiment is built from the seed
    /// when omitted.
    #[arg(long, requires = "explanations")]
    pub subset: Option<PathBuf>,
    #[arg(long, requires = "subset")]
    pub explanations: Option<PathBuf>,
    /// Must not already contain events.
    #[arg(long)]
    pub log_dir: PathBuf,
    #[arg(long, value_enum, default_value = "chance")]
    pub annotator: AnnotatorArg,
    #[arg(long, value_enum, default_value = "chance")]
    pub judging: JudgingArg,
    #[arg(long, default_value_t = 1.0)]
    pub bot_pass_probability: f64,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub log_dir: PathBuf,
    /// Sentiment model; its regularization strength is reused for the
    /// discriminator unless --lambda is given.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,30,40,50")]
    pub sizes: Vec<usize>,
    /// Defaults to the number of retained subjects.
    #[arg(long)]
    pub models_per_size: Option<usize>,
    #[arg(long, default_value_t = 0.6)]
    pub min_accuracy: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    pub holdout_fraction: f64,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ReportArgs {
    /// report.json written by `analyze`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::SelectSubset(_) => "select-subset",
            Command::Explain(_) => "explain",
            Command::CompareWords(_) => "compare-words",
            Command::Serve(_) => "serve",
            Command::Simulate(_) => "simulate",
            Command::Analyze(_) => "analyze",
            Command::Report(_) => "report",
        }
    }
}

/// Turns the `--config` file section for the chosen subcommand into flags
/// placed right after the subcommand name, so later flags win.
pub fn expand_config(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let mut config_path = None;
    let mut iter = argv.iter().enumerate().skip(1);
    while let Some((_, arg)) = iter.next() {
        if arg == "--config" {
            config_path = iter.next().map(|(_, v)| v.clone());
        } else if let Some(v) = arg.strip_prefix("--config=") {
            config_path = Some(v.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| anyhow::anyhow!("config {path}: {e}"))?;
    let config: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("config {path}: {e}"))?;

    let mut skip_next = false;
    let position = argv.iter().enumerate().skip(1).find_map(|(i, a)| {
        if skip_next {
            skip_next = false;
            return None;
        }
        if a == "--config" {
            skip_next = true;
            return None;
        }
        (!a.starts_with('-')).then_some(i)
    });
    let Some(position) = position else {
        return Ok(argv);
    };
    let Some(section) = config.get(&argv[position]) else {
        return Ok(argv);
    };
    let section = section
        .as_object()
        .ok_or_else(|| anyhow::anyhow!("config section {:?} must be an object", argv[position]))?;
    let mut flags = Vec::new();
    for (key, value) in section {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            serde_json::Value::Bool(true) => flags.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => flags.extend([flag, s.clone()]),
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
                    .collect();
                flags.extend([flag, joined.join(",")]);
            }
            other => flags.extend([flag, other.to_string()]),
        }
    }
    let mut out = argv[..=position].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[position + 1..]);
    Ok(out)
}
