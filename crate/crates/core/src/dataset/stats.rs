use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cad::vocab::{Lexical, TokenType};
use crate::cad::CadSequence;

use super::DatasetError;

/// Upper bounds (exclusive, except the last) of the length bins
/// 1–40, 40–60, 60–80, 80–160, 160–240.
pub const BIN_EDGES: [usize; 6] = [1, 40, 60, 80, 160, 240];
pub const BIN_LABELS: [&str; 5] = ["1-40", "40-60", "60-80", "80-160", "160-240"];

/// Reference corpus: total model count.
pub const REFERENCE_TOTAL: usize = 215_914;
/// Reference corpus: mean command length.
pub const REFERENCE_AVG_LENGTH: f64 = 36.2;
/// Reference corpus: percentage of models per length bin.
pub const REFERENCE_BINS: [f64; 5] = [76.6, 12.0, 5.9, 5.2, 0.21];

/// How the length of a program is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMode {
    /// Every non-pad token.
    #[default]
    Tokens,
    /// Drawing and extrusion commands: one per curve, loop and extrusion,
    /// plus the final end marker.
    Commands,
}

pub fn program_length(seq: &CadSequence, mode: LengthMode) -> usize {
    match mode {
        LengthMode::Tokens => seq.valid_len,
        LengthMode::Commands => seq
            .valid_tokens()
            .iter()
            .filter(|t| {
                matches!(
                    t.lexical(),
                    Lexical::Structural(TokenType::EndCurve | TokenType::EndLoop | TokenType::EndExtrusion | TokenType::End)
                )
            })
            .count(),
    }
}

/// Bin index of a length; lengths past the last edge land in the last bin.
pub fn bin_of(len: usize) -> usize {
    BIN_EDGES[1..5].iter().position(|&e| len < e).unwrap_or(4)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub avg_length: f64,
    /// Percentages per bin, in [`BIN_LABELS`] order.
    pub bins: [f64; 5],
}

impl CorpusStats {
    pub fn reference() -> Self {
        CorpusStats { total: REFERENCE_TOTAL, avg_length: REFERENCE_AVG_LENGTH, bins: REFERENCE_BINS }
    }

    pub fn csv_header() -> String {
        let mut h = vec!["dataset".to_string(), "total".into(), "avg_length".into()];
        h.extend(BIN_LABELS.iter().map(|b| format!("bin_{b}")));
        h.join(",")
    }

    pub fn csv_row(&self, name: &str) -> String {
        let mut r = vec![name.to_string(), self.total.to_string(), format!("{:.2}", self.avg_length)];
        r.extend(self.bins.iter().map(|b| format!("{b:.2}")));
        r.join(",")
    }

    /// Header, this corpus, and the reference row as a footer.
    pub fn to_csv(&self, name: &str) -> String {
        format!("{}\n{}\n{}\n", Self::csv_header(), self.csv_row(name), Self::reference().csv_row("reference"))
    }
}

pub fn stats(corpus: &[CadSequence], mode: LengthMode) -> Result<CorpusStats, DatasetError> {
    if corpus.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut counts = [0usize; 5];
    let mut sum = 0usize;
    for s in corpus {
        let l = program_length(s, mode);
        sum += l;
        counts[bin_of(l)] += 1;
    }
    let n = corpus.len() as f64;
    Ok(CorpusStats { total: corpus.len(), avg_length: sum as f64 / n, bins: counts.map(|c| 100.0 * c as f64 / n) })
}

/// Train, validation and test index sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded split stratified by length bin. Items are shuffled within each
/// bin, the bins are laid end to end, and each item goes to the part
/// furthest behind its quota, so every bin is spread in proportion.
pub fn split(lengths: &[usize], ratios: [f64; 3], seed: u64) -> Result<Split, DatasetError> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Ratios(ratios));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(lengths.len());
    for b in 0..5 {
        let mut members: Vec<usize> = (0..lengths.len()).filter(|&i| bin_of(lengths[i]) == b).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (k, idx) in order.into_iter().enumerate() {
        let deficit = |s: usize| ratios[s] * (k + 1) as f64 - parts[s].len() as f64;
        let best = (1..3).fold(0, |b, s| if deficit(s) > deficit(b) + 1e-12 { s } else { b });
        parts[best].push(idx);
    }
    let [train, val, test] = parts;
    Ok(Split { train, val, test })
}
