use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "maskforest", version, about = "Federated global outlier detection on masked data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one protocol round over a uniformly partitioned dataset.
    Run(RunArgs),
    /// Compare standard and multiparty detection across seeds and T values.
    Bench(BenchArgs),
    /// Write a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Check a transcript against the privacy rules.
    Audit(AuditArgs),
}

/// Fills every unset field of `self` from `other`.
macro_rules! merge_fields {
    ($self:ident, $other:ident, $($field:ident),+) => {
        $( if $self.$field.is_none() { $self.$field = $other.$field; } )+
    };
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    /// Labelled CSV dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of clients (at least 2).
    #[arg(long)]
    pub clients: Option<usize>,
    /// Detector: if or eif.
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub psi: Option<usize>,
    /// Condition number bound of the masking matrix.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_param: Option<f64>,
    /// Paillier modulus size in bits.
    #[arg(long)]
    pub keysize: Option<u64>,
    /// Flag the top ceil(f N) scores.
    #[arg(long, conflicts_with = "threshold")]
    pub contamination: Option<f64>,
    /// Flag scores strictly above tau.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with defaults for any of the flags above.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl RunArgs {
    pub fn merge(&mut self, other: RunArgs) {
        merge_fields!(self, other, data, clients, algo, trees, psi, t_param, keysize, seed, out);
        if self.contamination.is_none() && self.threshold.is_none() {
            self.contamination = other.contamination;
            self.threshold = other.threshold;
        }
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    /// Comma-separated labelled CSV datasets.
    #[arg(long, value_delimiter = ',')]
    pub data: Option<Vec<PathBuf>>,
    /// Runs (seeds) per cell.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Comma-separated detectors.
    #[arg(long, value_delimiter = ',')]
    pub algos: Option<Vec<String>>,
    /// Comma-separated modes: standard, multiparty.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<String>>,
    /// Comma-separated T values for multiparty cells.
    #[arg(long = "T", value_delimiter = ',')]
    #[serde(rename = "T")]
    pub t_values: Option<Vec<f64>>,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub psi: Option<usize>,
    #[arg(long)]
    pub keysize: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with defaults for any of the flags above.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl BenchArgs {
    pub fn merge(&mut self, other: BenchArgs) {
        merge_fields!(self, other, data, runs, algos, modes, t_values, clients, trees, psi, keysize, seed, out);
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub inliers: usize,
    #[arg(long)]
    pub outliers: usize,
    #[arg(long)]
    pub dims: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// NDJSON transcript written by `run`.
    #[arg(long)]
    pub transcript: PathBuf,
}
