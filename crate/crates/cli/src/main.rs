mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub use error::CliError;

#[global_allocator]
static ALLOC: gsmcad_bench::CountingAlloc = gsmcad_bench::CountingAlloc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Desk,
    Paper,
}

/// Sketch-extrusion CAD sequences: tokenization, geometry, dataset
/// generation, diffusion training, sampling and evaluation.
#[derive(Debug, Parser)]
#[command(name = "gsmcad", version)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON config file; keys `model` and `train` override the profile,
    /// command-line flags override the file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Floating-point precision for model computations.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Output file or directory; stdout when omitted and the command writes one file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serialize a tree JSON file into a token sequence JSON.
    Tokenize {
        tree: PathBuf,
        #[arg(long, default_value_t = 256)]
        max_len: usize,
    },
    /// Parse a token sequence JSON back into a tree JSON.
    Detokenize { sequence: PathBuf },
    /// Check the dataset filters on a sequence; exit status 1 when any fails.
    Validate { sequence: PathBuf },
    /// Execute a sequence into a voxel solid; writes surface samples as OBJ
    /// to --out and optionally the packed voxel grid.
    Execute {
        sequence: PathBuf,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value_t = 2048)]
        points: usize,
        /// Also write the voxel grid in binary form here.
        #[arg(long)]
        voxels: Option<PathBuf>,
    },
    /// Generate a synthetic corpus into the --out directory.
    GenData {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        min_len: usize,
        #[arg(long, default_value_t = 240)]
        max_len: usize,
        /// Padded length of the stored sequences.
        #[arg(long, default_value_t = 256)]
        pad_to: usize,
    },
    /// Length statistics of a corpus as CSV, with the reference row.
    Stats {
        corpus: PathBuf,
        /// Count sketch/extrusion commands instead of design tokens.
        #[arg(long)]
        commands: bool,
    },
    /// Train the diffusion model on a corpus; the checkpoint goes to --out.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Profile::Desk)]
        profile: Profile,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Architecture variant: g_mamba or vanilla_ssd.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Append one JSON line per step here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Unconditional generation into the --out directory.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long, default_value_t = 64)]
        n: usize,
    },
    /// Score generated sequences against references; writes the CSV report.
    Eval {
        #[arg(long)]
        gen: Option<PathBuf>,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Training corpus for novelty; the references are used otherwise.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Paired reconstruction of the references with this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Paired mode: `one-shot:<t>` or `chain:<t>`.
        #[arg(long, default_value = "chain:max")]
        paired_mode: String,
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
    /// Time and heap use of one denoiser pass against sequence length, as CSV.
    BenchScan {
        #[arg(long, value_delimiter = ',', default_values_t = gsmcad_bench::DEFAULT_LENGTHS)]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        d_e: usize,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
