use serde::{Deserialize, Serialize};

use super::codec::deserialize_sequence;
use super::sequence::CadSequence;
use super::vocab::{Lexical, TokenType};
use super::NodeType;
use crate::geometry;

/// Voxel resolution used when checking that a program executes to a solid.
pub const VALIDATION_RESOLUTION: usize = 32;

/// Which dataset filters a program passes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Contains at least one sketch and one extrusion.
    pub has_sketch_and_extrusion: bool,
    /// Every sketch has at least one loop and all of its loops are closed.
    pub closed_loops: bool,
    /// Executes to a non-empty watertight voxel solid.
    pub executes_to_solid: bool,
    /// Grammar or execution failure, when there is one.
    pub error: Option<String>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.has_sketch_and_extrusion && self.closed_loops && self.executes_to_solid
    }
}

/// Evaluates the three dataset filters on a sequence. Never fails.
pub fn validate_sequence(seq: &CadSequence) -> ValidationReport {
    let mut report = ValidationReport::default();
    let tree = match deserialize_sequence(seq) {
        Ok(t) => t,
        Err(e) => {
            let n = seq.tokens.len().min(seq.valid_len);
            let count = |ty: TokenType| {
                seq.tokens[..n].iter().filter(|t| t.lexical() == Lexical::Structural(ty)).count()
            };
            report.has_sketch_and_extrusion = count(TokenType::EndSketch) > 0 && count(TokenType::EndExtrusion) > 0;
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.has_sketch_and_extrusion = tree.count(NodeType::Sketch) > 0 && tree.count(NodeType::Extrusion) > 0;
    report.closed_loops = tree
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.node_type == NodeType::Loop)
        .all(|(i, _)| tree.loop_is_closed(i));
    if !report.closed_loops {
        report.error = Some("open loop".into());
        return report;
    }
    match geometry::execute(&tree, VALIDATION_RESOLUTION) {
        Ok(grid) => report.executes_to_solid = grid.is_watertight(),
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}
