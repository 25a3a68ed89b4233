use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use oracle4rec::Protocol;

#[derive(Debug, Parser)]
#[command(
    name = "oracle4rec",
    version,
    about = "Future-guided sequential recommendation",
    after_help = "Any configuration key can be overridden as a flag, e.g. `--model.d 64` \
                  or `--guiding.kind=js`.\nORACLE4REC_THREADS caps the worker count."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and index a raw TSV log into a dataset file plus stats.
    Prep(PrepArgs),
    /// Train a model and write a checkpoint, loss log and validation metrics.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test items.
    Eval(EvalArgs),
    /// Compare two checkpoints by preference-distribution KL.
    Analyze(AnalyzeArgs),
    /// Write a synthetic dataset with drifting category preferences.
    Synth(SynthArgs),
    /// Train one named ablation.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// Raw `user<TAB>item<TAB>timestamp[<TAB>cat|cat]` file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file or raw TSV; defaults to `data.path`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Protocol of the validation runs.
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory or its `checkpoint.bin`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset; defaults to the one the checkpoint was trained on.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory; defaults to the checkpoint directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Seed of the sampled negatives.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Reference model first (typically the unguided one), then the model
    /// under study.
    #[arg(long, num_args = 1, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Length of the recommendation list; defaults to `eval.top_k`.
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub users: usize,
    #[arg(long, default_value_t = 20)]
    pub items: usize,
    #[arg(long, default_value_t = 4)]
    pub categories: usize,
    /// Per-step probability that the favourite category moves on.
    #[arg(long, default_value_t = 0.1)]
    pub drift_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub min_len: usize,
    #[arg(long, default_value_t = 15)]
    pub max_len: usize,
    /// Probability that an item comes from the favourite category.
    #[arg(long, default_value_t = 0.8)]
    pub focus: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Ablation name, see `--list`.
    #[arg(required_unless_present = "list")]
    pub name: Option<String>,
    /// Print the available ablations and exit.
    #[arg(long)]
    pub list: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, required_unless_present = "list")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// `(key, value)` pairs taken from dotted flags.
pub type Overrides = Vec<(String, String)>;

/// Pulls `--section.key value` and `--section.key=value` pairs out of the
/// argument list; everything else is left for clap.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (flag, None),
        };
        if !key.contains('.') {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| format!("missing value for --{key}"))?,
        };
        overrides.push((key.to_string(), value));
    }
    Ok((rest, overrides))
}
