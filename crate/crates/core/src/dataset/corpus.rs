use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cad::io::{sequence_from_json, sequence_to_json};
use crate::cad::CadSequence;

use super::stats::CorpusStats;
use super::DatasetError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub seed: u64,
    pub length_range: (usize, usize),
    pub files: Vec<String>,
    pub stats: CorpusStats,
}

/// Writes one sequence file per model plus the manifest.
pub fn write_corpus(dir: &Path, seqs: &[CadSequence], manifest_seed: u64, length_range: (usize, usize), stats: CorpusStats) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(dir)?;
    let width = seqs.len().max(1).to_string().len().max(5);
    let mut files = Vec::with_capacity(seqs.len());
    for (i, s) in seqs.iter().enumerate() {
        let name = format!("{i:0width$}.json");
        fs::write(dir.join(&name), sequence_to_json(s))?;
        files.push(name);
    }
    let m = Manifest { count: seqs.len(), seed: manifest_seed, length_range, files, stats };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&m).expect("manifest serializes"))?;
    Ok(m)
}

/// Reads every sequence listed in a corpus manifest, or every `*.json`
/// file (sorted by name) when there is no manifest.
pub fn read_corpus(dir: &Path) -> Result<Vec<CadSequence>, DatasetError> {
    let manifest = dir.join(MANIFEST);
    let files: Vec<String> = if manifest.exists() {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(&manifest)?).map_err(|e| DatasetError::Format(e.to_string()))?;
        m.files
    } else {
        let mut names: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".json"))
            .collect();
        names.sort();
        names
    };
    files.iter().map(|f| Ok(sequence_from_json(&fs::read_to_string(dir.join(f))?)?)).collect()
}
