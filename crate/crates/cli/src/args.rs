use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hypgeo", version, about = "Hyperbolic latent hierarchies on synthetic feature data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic hierarchical dataset as JSON lines.
    GenData(GenDataArgs),
    /// Stratified train/validation split of a dataset.
    Split(SplitArgs),
    /// Train Stage II (embedding) or Stage III (delta mapper).
    Train(TrainArgs),
    /// Export embeddings as CSV.
    Embed(EmbedArgs),
    /// Sample children around a reference at a chosen parent radius.
    Sample(SampleArgs),
    /// Fixed-radius interpolation between two references.
    Interpolate(InterpolateArgs),
    /// Fuse two references at a chosen level.
    Fuse(FuseArgs),
    /// Edit a reference with a predicted latent delta.
    Edit(EditArgs),
    /// Finite-difference check of every layer and loss.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// TOML tree spec; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub branching: Option<Vec<usize>>,
    #[arg(long)]
    pub feat_dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub level_scales: Option<Vec<f64>>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub samples_per_leaf: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub val_out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    pub stage: u8,
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out records; without it `data` is split with the config's
    /// `train_frac` and `seed`.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Stage-II checkpoint to start Stage III from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Train Stage II on the reconstruction term only.
    #[arg(long)]
    pub rec_only: bool,
    /// Ablation: Adam on ball parameters in ambient coordinates.
    #[arg(long)]
    pub naive_euclidean_updates: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also embed the mean feature of every internal node.
    #[arg(long)]
    pub with_ancestors: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset holding the records that `--ref` may name.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Record index into `--data`, or a comma-separated feature vector.
    #[arg(long = "ref", allow_hyphen_values = true)]
    pub reference: String,
    #[arg(long)]
    pub r_parent: Option<f64>,
    #[arg(long)]
    pub r_child: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub from: String,
    #[arg(long, allow_hyphen_values = true)]
    pub to: String,
    /// Radius of the path; defaults to the radius of `--from`.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: String,
    #[arg(long, allow_hyphen_values = true)]
    pub b: String,
    /// Radius at which the two codes are mixed.
    #[arg(long)]
    pub r_level: f64,
    /// Weights on `--b` run from 0 to 1 over this many rows.
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Stage-III checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub source: String,
    #[arg(long, allow_hyphen_values = true)]
    pub target: String,
    /// Largest multiple of the predicted delta; rows run from 0 to this.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub strength: f64,
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    /// Drive the edit with a simulated text-side delta instead of the
    /// feature difference.
    #[arg(long)]
    pub text: bool,
    #[arg(long)]
    pub gap_eps: Option<f64>,
    #[arg(long)]
    pub gap_tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Check at the parameters of this checkpoint.
    #[arg(long, conflicts_with = "random")]
    pub ckpt: Option<PathBuf>,
    /// Check small randomly initialised models (the default).
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Random draws; defaults to 100 with `--random` and 2 with `--ckpt`.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Entries checked per tensor; defaults to all with `--random` and 16
    /// with `--ckpt`.
    #[arg(long)]
    pub max_coords: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}
