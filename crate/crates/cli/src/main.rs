mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Gender profiling with bleached text: train, evaluate and transfer
/// models across languages.
#[derive(Debug, Parser)]
#[command(name = "bleach", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bleach text from stdin (one tweet per line) into per-channel token rows.
    Bleach(BleachArgs),
    /// Train a model on one corpus and save it.
    Train(TrainArgs),
    /// Predict genders for the users of a corpus.
    Predict(PredictArgs),
    /// Accuracy of a saved model on a labelled corpus.
    Evaluate(EvaluateArgs),
    /// In-language k-fold cross-validation.
    Cv(CvArgs),
    /// Cross-language transfer (Avg, All or the full pairwise matrix).
    Xlang(XlangArgs),
    /// Most predictive features per gender, aggregated over languages.
    Features(FeaturesArgs),
    /// Fleiss kappa of an annotation file.
    Kappa(KappaArgs),
    /// Fit an orthogonal map between two embedding tables.
    Align(AlignArgs),
    /// Generate synthetic corpora with planted style signal.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Lexical,
    Abstract,
    /// Aligned-embedding baseline (xlang only).
    Embeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightingArg {
    Tfidf,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Setting {
    Avg,
    All,
    Pairwise,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    #[arg(long, value_enum, default_value = "abstract")]
    mode: ModeArg,
    /// Comma-separated bleaching channels, or `all`.
    #[arg(long, default_value = "all")]
    channels: String,
    /// Token n-gram range `lo:hi` [default: 1:5 abstract, 1:2 lexical].
    #[arg(long)]
    ngrams: Option<String>,
    /// Character n-gram range for lexical mode, or `none` [default: 3:6].
    #[arg(long)]
    char_ngrams: Option<String>,
    #[arg(long, value_enum, default_value = "tfidf")]
    weighting: WeightingArg,
    #[arg(long)]
    min_df: Option<usize>,
    #[arg(long)]
    char_min_df: Option<usize>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// SVM regularization constant.
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, env = "BLEACH_SEED", default_value_t = 0)]
    seed: u64,
    /// Tweets kept per user after balancing.
    #[arg(long, default_value_t = 200)]
    tweets_per_user: usize,
    /// Skip gender balancing and the tweet cap.
    #[arg(long)]
    no_prepare: bool,
    /// Run everything on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct BleachArgs {
    #[arg(long, default_value = "all")]
    channels: String,
    /// JSON object of token counts for the Frequency channel.
    #[arg(long)]
    freq_table: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// JSONL corpus, optionally `lang=path`.
    #[arg(long)]
    corpus: String,
    /// Model file to write; the manifest goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: String,
    /// Predictions TSV to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: String,
    /// Output directory for results.tsv, results.txt and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    corpus: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct XlangArgs {
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "all")]
    setting: Setting,
    /// Comma-separated source corpora (`lang=path` or path).
    #[arg(long, value_delimiter = ',', required = true)]
    train: Vec<String>,
    /// Target corpus; not used with `--setting=pairwise`.
    #[arg(long)]
    test: Option<String>,
    /// Embedding tables for `--mode=embeds`, as `lang=path`.
    #[arg(long, value_delimiter = ',')]
    embeddings: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// One corpus per language; a model is trained on each.
    #[arg(long, value_delimiter = ',')]
    corpora: Vec<String>,
    /// Saved models to report on instead of training (`lang=path` or path).
    #[arg(long, value_delimiter = ',', conflicts_with = "corpora")]
    models: Vec<String>,
    /// Top features taken per language and gender.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KappaArgs {
    /// TSV with header and rows `item_id<TAB>rater_id<TAB>label`.
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Source embeddings (word2vec text format).
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Skip unit-normalize / center / unit-normalize.
    #[arg(long)]
    raw: bool,
    /// Matrix file to write; the manifest goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    languages: usize,
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 50)]
    tweets: usize,
    #[arg(long, env = "BLEACH_SEED", default_value_t = 42)]
    seed: u64,
    /// Same generator without any gender signal.
    #[arg(long)]
    no_signal: bool,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<bleach_core::Error>() {
            return if e.is_io() { 2 } else { 1 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
