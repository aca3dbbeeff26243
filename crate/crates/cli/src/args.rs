//! Command-line syntax.

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};
use textseek_train::Mode;

/// Seed used when neither `--seed` nor the config file sets one.
pub const DEFAULT_SEED: u64 = 20210806;

#[derive(Debug, Parser)]
#[command(name = "textseek", version, about = "Query-by-string retrieval of words in scene images")]
pub struct Cli {
    /// TOML file with optional [train] and [synth] tables; missing keys keep their defaults
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Random seed, overriding the one in the config file
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Directory for everything the command writes, including run.json
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Log progress to stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: textseek_train::TrainError| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render an annotated synthetic dataset
    GenData(GenDataArgs),
    /// Train a model on an annotated dataset
    Train(TrainArgs),
    /// Detect and encode the proposals of a gallery into an index file
    Index(IndexArgs),
    /// Rank the indexed gallery for one or more query words
    Retrieve(RetrieveArgs),
    /// Mean average precision of a query set over an indexed, annotated gallery
    EvalMap(EvalMapArgs),
    /// Place given words on the most similar proposals of one image
    Annotate(AnnotateArgs),
    /// Train and evaluate several modes over several seeds and tabulate mAP
    Ablate(AblateArgs),
    /// Histogram of pairwise word similarity, as CSV and PNG
    PlotHist(PlotHistArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Index(_) => "index",
            Command::Retrieve(_) => "retrieve",
            Command::EvalMap(_) => "eval-map",
            Command::Annotate(_) => "annotate",
            Command::Ablate(_) => "ablate",
            Command::PlotHist(_) => "plot-hist",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct GenDataArgs {
    /// Number of images to render
    #[arg(long, default_value_t = 200)]
    pub images: usize,

    /// Number of words drawn from the built-in word list
    #[arg(long, default_value_t = 20, conflicts_with = "lexicon")]
    pub lexicon_size: usize,

    /// Lexicon file with one word per line, instead of the built-in list
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,

    /// Charset file (one symbol per line); defaults to a-z and 0-9
    #[arg(long, value_name = "FILE")]
    pub charset: Option<PathBuf>,

    /// Treat upper and lower case as the same symbol
    #[arg(long)]
    pub fold_case: bool,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Dataset directory, or its annotation file
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Training mode: joint, separated, phoc_head, no_pp_qq, no_was, no_ctc, baseline, +ctc, +was, +was+ctc
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,

    /// Number of iterations
    #[arg(long)]
    pub iterations: Option<usize>,

    /// Override one training config key, e.g. --set lr=0.02 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, clap::Args)]
pub struct IndexArgs {
    /// Trained checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Dataset directory or annotation file; a plain directory of PNG images also works
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Comma-separated long-side lengths to run the detector at; 0 keeps the native size
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub scales: Vec<usize>,
}

#[derive(Debug, clap::Args)]
pub struct RetrieveArgs {
    /// Checkpoint the index was built with
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Index file written by `index`
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,

    /// Number of ranked images to report per query (0 reports all)
    #[arg(long, default_value_t = 10)]
    pub topk: usize,

    /// Query words
    #[arg(required = true, value_name = "QUERY")]
    pub queries: Vec<String>,
}

#[derive(Debug, clap::Args)]
pub struct EvalMapArgs {
    /// Checkpoint the index was built with
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Index file written by `index`
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,

    /// Dataset directory or annotation file with the gallery's ground truth
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Query file with one word per line; defaults to the dataset lexicon
    #[arg(long, value_name = "FILE")]
    pub queries: Option<PathBuf>,

    /// Compare queries and transcripts ignoring case
    #[arg(long)]
    pub fold_case: bool,
}

#[derive(Debug, clap::Args)]
pub struct AnnotateArgs {
    /// Trained checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Image to annotate
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,

    /// Comma-separated long-side lengths to run the detector at; 0 keeps the native size
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub scales: Vec<usize>,

    /// Words known to appear in the image
    #[arg(required = true, value_name = "WORD")]
    pub words: Vec<String>,
}

#[derive(Debug, clap::Args)]
pub struct AblateArgs {
    /// Training dataset directory or annotation file
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Held-out gallery dataset directory or annotation file
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,

    /// Comma-separated training modes to compare
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "baseline,+ctc,+was,+was+ctc")]
    pub modes: Vec<Mode>,

    /// Number of seeds per mode, counting up from the run seed
    #[arg(long, default_value_t = 3)]
    pub runs: usize,

    /// Override one training config key for every run (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Comma-separated long-side lengths used when indexing the gallery
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub scales: Vec<usize>,

    /// Compare queries and transcripts ignoring case
    #[arg(long)]
    pub fold_case: bool,
}

#[derive(Debug, clap::Args)]
pub struct PlotHistArgs {
    /// Lexicon file with one word per line; defaults to the built-in word list
    #[arg(long, value_name = "FILE", conflicts_with = "random_words")]
    pub lexicon: Option<PathBuf>,

    /// Use this many distinct random words of 3 to 10 characters as the lexicon
    #[arg(long, value_name = "N")]
    pub random_words: Option<usize>,

    /// Add one pseudoword per lexicon word before counting pairs
    #[arg(long)]
    pub augment: bool,

    /// Augmentation ratios insert:delete:replace:keep
    #[arg(long, default_value = "1:1:1:5")]
    pub ratios: String,

    /// Number of histogram bins over [0, 1]
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}
