use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "nmt", version, about = "Transformer translation training and hyperparameter ablation")]
pub struct Cli {
    /// Output directory. Falls back to the sweep spec's output_dir, then
    /// $NMT_ABLATE_OUT, then ./runs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build vocabularies and the train/validation split manifest.
    Prepare(DataArgs),
    /// Train a single configuration.
    Train(TrainArgs),
    /// Run a grid of configurations under the budget.
    Sweep(SweepArgs),
    /// Continue an interrupted sweep or training run in --out.
    Resume,
    /// Summary table, per-epoch curves and best run.
    Report(ReportArgs),
    /// Greedy-decode a source sentence with a checkpoint.
    Translate(TranslateArgs),
    /// Print the exact parameter count of a configuration.
    CountParams(CountArgs),
    /// Write a synthetic English-Spanish corpus as tab-separated pairs.
    SynthCorpus(SynthArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct DataArgs {
    /// Tab-separated corpus, one "english<TAB>spanish" pair per line.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Use this many generated synthetic pairs instead of --corpus.
    #[arg(long, conflicts_with = "corpus")]
    pub synthetic: Option<usize>,
    /// Keep only the first N pairs.
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Training fraction of the split.
    #[arg(long)]
    pub split_ratio: Option<f64>,
    /// Minimum token frequency for the vocabularies.
    #[arg(long)]
    pub min_freq: Option<usize>,
    /// Sequence cap in tokens, specials included.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Seed for the split, initialization, dropout and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Epoch cap.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Use the extended 400-epoch cap.
    #[arg(long)]
    pub extended: bool,
    /// Wall-clock cap for the whole sweep, in hours.
    #[arg(long)]
    pub wall_clock_hours: Option<f64>,
    /// Wall-clock cap per run, in minutes.
    #[arg(long)]
    pub per_run_minutes: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Global gradient-norm clip (off by default).
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Runs trained concurrently.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 128)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Encoder layers; the decoder gets the same number.
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Sweep spec (TOML). Flags below override its values.
    #[arg(long)]
    pub spec: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Read rows from a summary CSV instead of the registry in --out.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Print only the best completed run.
    #[arg(long)]
    pub best: bool,
    /// Write accuracy, loss and perplexity curves to <out>/curves.
    #[arg(long, conflicts_with = "table")]
    pub curves: bool,
    /// Restrict --curves to one run id.
    #[arg(long, requires = "curves")]
    pub run: Option<String>,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    /// Checkpoint directory, e.g. <out>/runs/<id>/state.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding vocab.src.tsv and vocab.tgt.tsv; defaults to the
    /// nearest ancestor of the checkpoint that has them.
    #[arg(long)]
    pub vocab_dir: Option<PathBuf>,
    /// Maximum output tokens.
    #[arg(long, default_value_t = 100)]
    pub max_out_len: usize,
    /// English source sentence.
    #[arg(required = true)]
    pub text: Vec<String>,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    #[arg(long)]
    pub d_model: usize,
    #[arg(long)]
    pub heads: usize,
    #[arg(long)]
    pub layers: usize,
    #[arg(long)]
    pub src_vocab: usize,
    #[arg(long)]
    pub tgt_vocab: usize,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
