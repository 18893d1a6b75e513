//! Synthetic sketch–extrusion corpus: generator, length statistics,
//! stratified splits and the on-disk corpus layout.

mod corpus;
mod generate;
mod stats;

use thiserror::Error;

use crate::cad::CadError;

pub use corpus::{read_corpus, write_corpus, Manifest, MANIFEST};
pub use generate::{check_range, generate, generate_one, MAX_PROGRAM_LEN, MIN_PROGRAM_LEN};
pub use stats::{
    bin_of, program_length, split, stats, CorpusStats, LengthMode, Split, BIN_EDGES, BIN_LABELS, REFERENCE_AVG_LENGTH,
    REFERENCE_BINS, REFERENCE_TOTAL,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("infeasible request: {0}")]
    Infeasible(String),
    #[error("empty corpus")]
    Empty,
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    Ratios([f64; 3]),
    #[error("corpus format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Cad(#[from] CadError),
}
