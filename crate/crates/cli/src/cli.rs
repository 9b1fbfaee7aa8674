use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "dataref",
    version,
    about = "Find dataset references in papers and link them to registry records"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "DATAREF_CONFIG")]
    pub config: Option<PathBuf>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Harvest registry metadata over OAI-PMH into the record store.
    Harvest(HarvestArgs),
    /// Report how often titles contain abbreviations, phrases and file names.
    AnalyzeTitles(AnalyzeArgs),
    /// Induce the abbreviation and phrase dictionary from record titles.
    BuildDict(BuildDictArgs),
    /// Find dictionary features in papers.
    Detect(DetectArgs),
    /// Rank candidate records for detected mentions.
    Rank(RankArgs),
    /// Create review sessions from mentions and ranked candidates.
    Review(ReviewArgs),
    /// Score detection and matching against a gold standard.
    Evaluate(EvaluateArgs),
    /// Serve the review API.
    Serve(ServeArgs),
    /// Export the links of a completed session.
    Export(ExportArgs),
    /// Detect, rank and open review sessions for a batch of papers.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct RecordsArg {
    /// Record store (JSON lines).
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DictionaryArg {
    /// Dictionary file (tab-separated).
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HarvestArgs {
    /// OAI-PMH base URL.
    #[arg(long)]
    pub endpoint: String,
    #[arg(long)]
    pub set: Option<String>,
    /// Only records changed on or after this date (YYYY-MM-DD).
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Resumption token printed by an interrupted harvest.
    #[arg(long)]
    pub resume: Option<String>,
    #[command(flatten)]
    pub records: RecordsArg,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub records: RecordsArg,
    #[command(flatten)]
    pub dictionary: DictionaryArg,
}

#[derive(Debug, Args)]
pub struct BuildDictArgs {
    #[command(flatten)]
    pub records: RecordsArg,
    /// Directory with english.txt, german.txt, countries.txt, stopwords.txt.
    #[arg(long)]
    pub wordlists: Option<PathBuf>,
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    #[arg(long)]
    pub blacklist: Option<PathBuf>,
    /// Output dictionary; defaults to the configured dictionary path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Plain-text papers; the file stem is the paper id.
    #[arg(required = true)]
    pub papers: Vec<PathBuf>,
    #[command(flatten)]
    pub dictionary: DictionaryArg,
    #[arg(long, default_value = "mentions.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long, default_value = "mentions.jsonl")]
    pub mentions: PathBuf,
    /// Directory holding `<paper_id>.txt`; its sentences join the tf-idf
    /// corpus. Without it the mention contexts stand in for the papers.
    #[arg(long)]
    pub paper_dir: Option<PathBuf>,
    #[command(flatten)]
    pub records: RecordsArg,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Consider records of every resource type, not only datasets.
    #[arg(long)]
    pub all_types: bool,
    #[arg(long, default_value = "ranked.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WorkflowArg {
    PerReference,
    PerFeature,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    #[arg(long, default_value = "mentions.jsonl")]
    pub mentions: PathBuf,
    #[arg(long, default_value = "ranked.jsonl")]
    pub ranked: PathBuf,
    #[command(flatten)]
    pub records: RecordsArg,
    /// Workflows to create sessions for (repeatable).
    #[arg(long = "workflow", value_enum)]
    pub workflows: Vec<WorkflowArg>,
    #[arg(long, default_value = "sessions")]
    pub sessions: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Detection,
    Matching,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// The top-k ranked candidates are the suggestions.
    Topk,
    /// The expert's decisions from completed sessions are the suggestions.
    Decision,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value = "mentions.jsonl")]
    pub mentions: PathBuf,
    #[arg(long, default_value = "ranked.jsonl")]
    pub ranked: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub phase: PhaseArg,
    #[arg(long, value_enum, default_value = "topk")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Session directory for `--mode decision`.
    #[arg(long, default_value = "sessions")]
    pub sessions: PathBuf,
    /// Require identical offsets for a detection match.
    #[arg(long)]
    pub offset_strict: bool,
    /// Write the reports as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "sessions")]
    pub sessions: PathBuf,
    /// Address to listen on; defaults to the configured one.
    #[arg(long)]
    pub listen: Option<String>,
    #[command(flatten)]
    pub dictionary: DictionaryArg,
    #[arg(long)]
    pub blacklist: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Json,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub session: String,
    #[arg(long, default_value = "sessions")]
    pub sessions: PathBuf,
    #[arg(long, value_enum, default_value = "tsv")]
    pub format: FormatArg,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(required = false)]
    pub papers: Vec<PathBuf>,
    #[command(flatten)]
    pub records: RecordsArg,
    #[command(flatten)]
    pub dictionary: DictionaryArg,
    /// Build the dictionary from the records first.
    #[arg(long)]
    pub build_dict: bool,
    #[arg(long = "workflow", value_enum)]
    pub workflows: Vec<WorkflowArg>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}
