use std::path::PathBuf;

use azoo_core::env::DEFAULT_ROLLOUT_STEPS;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "azoo", version, about = "Inspect frozen convolutional RL policies: rollouts, filters, robustness, embeddings, patches, dreams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a model's metadata and architecture.
    Inspect {
        model: PathBuf,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Check a model container's checksum and tensor shapes.
    Validate { model: PathBuf },
    /// Write a synthetic model container (random weights or a fixture).
    SynthModel(SynthArgs),
    /// Run a model in the toy environment and record a rollout archive.
    Rollout(RolloutArgs),
    /// First-layer filter mosaic (PNG) and temporal profile (CSV).
    Filters {
        model: PathBuf,
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Rank models by how much their first layer weights past frames.
    TemporalBias {
        #[arg(required = true)]
        models: Vec<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Score degradation under observation or parameter noise.
    Robustness(RobustnessArgs),
    /// Train a frame classifier that tells algorithms apart.
    Classify(ClassifyArgs),
    /// PCA + t-SNE embedding of RAM states or hidden activations.
    Embed(EmbedArgs),
    /// Top-k input patches that most excite one conv filter.
    Patches(PatchArgs),
    /// Synthesize an input that maximizes a unit.
    Dream(DreamArgs),
    /// Render one activation-trace PNG per rollout step.
    RenderTrace {
        rollout: PathBuf,
        /// Model that produced the rollout (supplies layer shapes and
        /// recomputes traces if none were recorded).
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Render only the first N steps.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Tile one step of many rollouts into a runs × algorithms grid.
    RenderGrid(GridArgs),
    /// Serve a directory read-only over HTTP for the explorer UI.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value_t = 8000)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Head {
    Q,
    Dueling,
    C51,
    ActorCritic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    /// He-normal random weights.
    Random,
    /// Hand-wired net that picks the brightest quadrant.
    Quadrant,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SynthKind::Random)]
    pub kind: SynthKind,
    #[arg(long, value_enum, default_value_t = Head::Q)]
    pub head: Head,
    #[arg(long, default_value_t = 4)]
    pub actions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "toy-catch")]
    pub game: String,
    #[arg(long, default_value = "DQN")]
    pub algorithm: String,
    #[arg(long, default_value = "1")]
    pub run: String,
    /// final, initial, hours:N, frames:N or human_level.
    #[arg(long, default_value = "final")]
    pub checkpoint: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Policy {
    Greedy,
    Sample,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    pub model: PathBuf,
    /// Archive directory.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ROLLOUT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Policy::Greedy)]
    pub policy: Policy,
    /// Also store per-layer activations.
    #[arg(long)]
    pub activations: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseKind {
    Observation,
    Parameter,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    AlgorithmBest,
    OverallBest,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[arg(required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = NoiseKind::Observation)]
    pub noise: NoiseKind,
    /// Comma-separated, ascending, starting at 0. Defaults depend on --noise.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_ROLLOUT_STEPS)]
    pub max_steps: usize,
    #[arg(long, value_enum, default_value_t = Mode::AlgorithmBest)]
    pub mode: Mode,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Rollout archives, optionally prefixed with a class: `CLASS=DIR`.
    /// Without a prefix the producing algorithm is the class.
    #[arg(required = true)]
    pub rollouts: Vec<String>,
    #[arg(long, default_value_t = azoo_core::distinguisher::DEFAULT_FRAMES_PER_MODEL)]
    pub frames_per_model: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(required = true)]
    pub rollouts: Vec<PathBuf>,
    /// Embed this model's activations instead of RAM (single rollout).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// conv1..convN, fc or output.
    #[arg(long, default_value = "fc")]
    pub layer: String,
    #[arg(long, default_value_t = azoo_core::embedding::DEFAULT_PCA_DIMS)]
    pub pca_dims: usize,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 3000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PatchArgs {
    pub model: PathBuf,
    pub rollout: PathBuf,
    /// One-based conv layer.
    #[arg(long)]
    pub layer: usize,
    #[arg(long)]
    pub filter: usize,
    #[arg(short, long, default_value_t = 9)]
    pub k: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AscentArg {
    Adam,
    Plain,
}

#[derive(Debug, Args)]
pub struct DreamArgs {
    pub model: PathBuf,
    /// conv<L>:<C>, conv<L>:<C>:<Y>:<X>, fc:<I> or out:<A>.
    #[arg(long)]
    pub objective: String,
    #[arg(long, default_value_t = 512)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    #[arg(long, default_value_t = 4)]
    pub jitter: usize,
    #[arg(long, default_value_t = 0.0)]
    pub tv: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l1: f64,
    #[arg(long, value_enum, default_value_t = AscentArg::Adam)]
    pub ascent: AscentArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Row labels (runs), comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rows: Vec<String>,
    /// Column labels (algorithms), comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub cols: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub step: usize,
    /// Rollout archives in row-major order.
    #[arg(required = true)]
    pub rollouts: Vec<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}
