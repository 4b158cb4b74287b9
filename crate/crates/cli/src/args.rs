use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "mbrkit", version, about = "MBR and QE decoding, reranking and distillation data tools")]
pub struct Cli {
    /// Worker threads for parallel stages (0 = available parallelism)
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    /// Run the command described by a JSON job file instead of flags
    #[arg(long, global = true)]
    pub job: Option<PathBuf>,

    /// Write the resolved job to this path
    #[arg(long, global = true)]
    pub save_job: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Draw epsilon-sampled candidates for every source
    Sample(SampleArgs),
    /// Select among candidates (mbr, qe) or decode directly (beam, greedy, sample)
    Decide(DecideArgs),
    /// Build a distillation dataset and its manifest
    Distill(DistillArgs),
    /// Combine distillation datasets
    Mix(MixArgs),
    /// Length, ratio and duplicate filtering of a corpus
    Filter(FilterArgs),
    /// Metric report for system outputs and MQM annotations
    Evaluate(EvaluateArgs),
    /// Pairwise accuracy of metric scores against gold scores
    Metaeval(MetaevalArgs),
    /// Corpus BLEU between every pair of systems
    Crossbleu(CrossbleuArgs),
    /// Train or export the toy bigram model
    ToyModel(ToyModelArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Decide(_) => "decide",
            Command::Distill(_) => "distill",
            Command::Mix(_) => "mix",
            Command::Filter(_) => "filter",
            Command::Evaluate(_) => "evaluate",
            Command::Metaeval(_) => "metaeval",
            Command::Crossbleu(_) => "crossbleu",
            Command::ToyModel(_) => "toy-model",
        }
    }

    pub fn args_json(&self) -> serde_json::Value {
        let v = match self {
            Command::Sample(a) => serde_json::to_value(a),
            Command::Decide(a) => serde_json::to_value(a),
            Command::Distill(a) => serde_json::to_value(a),
            Command::Mix(a) => serde_json::to_value(a),
            Command::Filter(a) => serde_json::to_value(a),
            Command::Evaluate(a) => serde_json::to_value(a),
            Command::Metaeval(a) => serde_json::to_value(a),
            Command::Crossbleu(a) => serde_json::to_value(a),
            Command::ToyModel(a) => serde_json::to_value(a),
        };
        v.expect("arguments serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// `.jsonl` extension or a leading `{` means JSONL segments, else plain text
    Auto,
    Plain,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mbr,
    Qe,
    Beam,
    Greedy,
    Sample,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Emit {
    Selections,
    Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Balanced,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DedupArg {
    None,
    ExactPair,
    ExactSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    System,
    Segment,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizeArg {
    Whitespace,
    Char,
}

/// Toy model selection shared by commands that decode.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Toy model JSON (default: the built-in model)
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SampleArgs {
    /// Source file: one sentence per line or JSONL segments (default: stdin)
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
    #[arg(long, default_value_t = 256)]
    pub num_samples: usize,
    #[arg(long, default_value_t = 0.02)]
    pub epsilon: f64,
    /// Required; all randomness derives from it
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Candidate JSONL (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run parameters as JSON
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DecideArgs {
    /// Candidate JSONL (default: stdin)
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Utility name, e.g. chrf, chrf_src or external:cmd=...,mode=qe
    #[arg(long)]
    pub utility: Option<String>,
    /// Score candidates against themselves too (mbr)
    #[arg(long, default_value_t = true, num_args = 0..=1, require_equals = true, default_missing_value = "true", action = ArgAction::Set)]
    pub include_self: bool,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Select on candidate prefixes of these sizes (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub top_k: Vec<usize>,
    /// Output shape (default: selections for mbr/qe, dataset otherwise)
    #[arg(long, value_enum)]
    pub emit: Option<Emit>,
    /// Write MBR utility matrices as JSONL
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub beam_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "teacher")]
    pub teacher_id: String,
    /// Dataset manifest path (with --emit dataset)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DistillArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub utility: Option<String>,
    /// Pre-generated candidate JSONL (external teacher)
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Source corpus; decoded with the toy model unless --candidates is given
    #[arg(long)]
    pub sources: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 256)]
    pub num_samples: usize,
    #[arg(long, default_value_t = 0.02)]
    pub epsilon: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub beam_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value = "teacher")]
    pub teacher_id: String,
    #[arg(long, default_value_t = true, num_args = 0..=1, require_equals = true, default_missing_value = "true", action = ArgAction::Set)]
    pub include_self: bool,
    /// Drop segments whose scoring fails and list them in the manifest
    #[arg(long, default_value_t = false, num_args = 0..=1, require_equals = true, default_missing_value = "true", action = ArgAction::Set)]
    pub skip_failed: bool,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Manifest of the previous round; links the new dataset to it
    #[arg(long)]
    pub parent_manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MixArgs {
    /// Distillation datasets
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Policy::Balanced)]
    pub policy: Policy,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FilterArgs {
    /// TSV (source<TAB>target) or, with --monolingual, plain lines (default: stdin)
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 250)]
    pub max_src_tokens: usize,
    #[arg(long, default_value_t = 1.5)]
    pub max_ratio: f64,
    #[arg(long, value_enum, default_value_t = DedupArg::ExactPair)]
    pub dedup: DedupArg,
    /// Apply the ratio as source/target only
    #[arg(long, default_value_t = false, num_args = 0..=1, require_equals = true, default_missing_value = "true", action = ArgAction::Set)]
    pub strict_direction: bool,
    /// Command answering 1 (keep) or 0 (drop) per `source<TAB>target` line
    #[arg(long)]
    pub hook: Option<String>,
    /// Input is one sentence per line; only exact dedup applies
    #[arg(long, default_value_t = false, num_args = 0..=1, require_equals = true, default_missing_value = "true", action = ArgAction::Set)]
    pub monolingual: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report JSON path (default: stderr)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvaluateArgs {
    /// System outputs as `[name=]path`: datasets, JSONL with seg_id and text, or plain lines
    pub inputs: Vec<String>,
    /// References: JSONL segments with a reference, or plain lines
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Sources for reference-free metrics (JSONL segments or plain lines)
    #[arg(long)]
    pub sources: Option<PathBuf>,
    /// Comma separated metric names; `corpus_bleu` is corpus-level BLEU
    #[arg(long, value_delimiter = ',', default_value = "chrf,corpus_bleu")]
    pub metrics: Vec<String>,
    /// MQM annotation JSONL
    #[arg(long)]
    pub mqm: Option<PathBuf>,
    /// Selection JSONL whose rankings feed the histogram
    #[arg(long)]
    pub selections: Option<PathBuf>,
    /// Histogram CSV path
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Report JSON path; the text table always goes to stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetaevalArgs {
    /// Gold JSONL of {"system","seg_id","score"}, higher is better
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// MQM annotations used as gold (negated, so higher is better)
    #[arg(long)]
    pub gold_mqm: Option<PathBuf>,
    /// Metric JSONL of {"system","seg_id","score"}
    #[arg(long)]
    pub metric: PathBuf,
    #[arg(long, value_enum, default_value_t = Level::Both)]
    pub level: Level,
    /// Metric scores this close count as tied at segment level
    #[arg(long, default_value_t = 0.0)]
    pub tie_eps: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CrossbleuArgs {
    /// System outputs as `[name=]path`
    #[arg(num_args = 2.., required = true)]
    pub inputs: Vec<String>,
    #[arg(long, value_enum, default_value_t = TokenizeArg::Whitespace)]
    pub tokenize: TokenizeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ToyModelArgs {
    /// Training pairs as TSV (default: the built-in corpus)
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
