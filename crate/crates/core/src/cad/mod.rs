//! Sketch–extrusion CAD language: vocabulary, flat sequences, trees and the
//! codec between them.

mod codec;
pub mod io;
mod sequence;
mod tree;
mod validate;
pub mod vocab;

use thiserror::Error;

pub use codec::{deserialize_sequence, serialize_tree, serialize_with_origins, TokenOrigin, TokenRole};
pub use sequence::{derive_flags, CadSequence};
pub use tree::{
    CadTree, DesignStep, Extrusion, ExtrusionParams, NodeParams, NodeType, Point2, PrimitiveKind, SketchPrimitive,
    TreeBuilder, TreeNode,
};
pub use validate::{validate_sequence, ValidationReport, VALIDATION_RESOLUTION};
pub use vocab::{dequantize, quantize, BooleanOp, TokenId, TokenPair, TokenType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CadError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown token id {value}{}", .index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    UnknownToken { index: Option<usize>, value: u16 },
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("tree node {node}: {reason}")]
    Tree { node: usize, reason: String },
    #[error("parse error at token {index}: {reason}")]
    Parse { index: usize, reason: String },
    #[error("sequence of {len} tokens exceeds maximum length {max}")]
    TooLong { len: usize, max: usize },
    #[error("format error: {0}")]
    Format(String),
}
