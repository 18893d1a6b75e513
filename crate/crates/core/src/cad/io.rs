//! On-disk formats for sequences and trees.
//!
//! * JSON sequence: `{"version":1,"tokens":[[a,b],...],"type_flags":[...],"step_flags":[...],"valid_len":n}`
//! * JSON tree: `{"version":1,"root":r,"nodes":[{"node_type":..,"params":..,"children":[..],"parent":..}]}`
//! * Binary token stream: magic `GFC1`, then little-endian `u16` ids with
//!   the two components of each pair interleaved.
//!
//! JSON output is compact with fields in declaration order, so equal values
//! always produce identical bytes.

use serde::{Deserialize, Serialize};

use super::sequence::CadSequence;
use super::tree::{CadTree, TreeNode};
use super::vocab::TokenPair;
use super::CadError;

pub const FORMAT_VERSION: u32 = 1;
pub const TOKEN_STREAM_MAGIC: &[u8; 4] = b"GFC1";

#[derive(Serialize, Deserialize)]
struct SequenceFile {
    version: u32,
    tokens: Vec<TokenPair>,
    type_flags: Vec<u8>,
    step_flags: Vec<u16>,
    valid_len: usize,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    version: u32,
    root: usize,
    nodes: Vec<TreeNode>,
}

fn check_version(v: u32) -> Result<(), CadError> {
    if v != FORMAT_VERSION {
        return Err(CadError::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn sequence_to_json(seq: &CadSequence) -> String {
    let file = SequenceFile {
        version: FORMAT_VERSION,
        tokens: seq.tokens.clone(),
        type_flags: seq.type_flags.clone(),
        step_flags: seq.step_flags.clone(),
        valid_len: seq.valid_len,
    };
    serde_json::to_string(&file).expect("sequence serializes")
}

pub fn sequence_from_json(s: &str) -> Result<CadSequence, CadError> {
    let f: SequenceFile = serde_json::from_str(s).map_err(|e| CadError::Format(e.to_string()))?;
    check_version(f.version)?;
    let seq = CadSequence { tokens: f.tokens, type_flags: f.type_flags, step_flags: f.step_flags, valid_len: f.valid_len };
    seq.check()?;
    Ok(seq)
}

pub fn tree_to_json(tree: &CadTree) -> String {
    let file = TreeFile { version: FORMAT_VERSION, root: tree.root, nodes: tree.nodes.clone() };
    serde_json::to_string(&file).expect("tree serializes")
}

pub fn tree_from_json(s: &str) -> Result<CadTree, CadError> {
    let f: TreeFile = serde_json::from_str(s).map_err(|e| CadError::Format(e.to_string()))?;
    check_version(f.version)?;
    let tree = CadTree { nodes: f.nodes, root: f.root };
    tree.check_structure()?;
    Ok(tree)
}

/// Encodes every token (padding included) as interleaved little-endian `u16`s.
pub fn sequence_to_bytes(seq: &CadSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + seq.tokens.len() * 4);
    out.extend_from_slice(TOKEN_STREAM_MAGIC);
    for t in &seq.tokens {
        out.extend_from_slice(&t.a.get().to_le_bytes());
        out.extend_from_slice(&t.b.get().to_le_bytes());
    }
    out
}

/// Decodes a token stream; flags are re-derived from the tokens.
pub fn sequence_from_bytes(bytes: &[u8]) -> Result<CadSequence, CadError> {
    let body = bytes
        .strip_prefix(TOKEN_STREAM_MAGIC.as_slice())
        .ok_or_else(|| CadError::Format("missing GFC1 magic".into()))?;
    if body.len() % 4 != 0 {
        return Err(CadError::Format(format!("token stream body of {} bytes is not whole pairs", body.len())));
    }
    let tokens = body
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let a = u16::from_le_bytes([c[0], c[1]]);
            let b = u16::from_le_bytes([c[2], c[3]]);
            TokenPair::from_raw(a, b).map_err(|_| CadError::UnknownToken { index: Some(i), value: a.max(b) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    CadSequence::from_padded(tokens)
}
